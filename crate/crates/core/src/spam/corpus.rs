use super::Label;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CorpusError {
    #[error("line {line}: expected `label<TAB>text`")]
    Format { line: usize },
    #[error("line {line}: unknown label {label:?}")]
    Label { line: usize, label: String },
}

/// Parses the `label<TAB>text` fixture format. Blank lines are skipped.
pub fn parse_corpus(src: &str) -> Result<Vec<(Label, String)>, CorpusError> {
    let mut out = Vec::new();
    for (i, raw) in src.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let (label, text) = raw.split_once('\t').ok_or(CorpusError::Format { line })?;
        let label = label.parse().map_err(|_| CorpusError::Label { line, label: label.to_owned() })?;
        out.push((label, text.to_owned()));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_lines() {
        let c = parse_corpus("spam\tWIN cash now\n\nham\tteam lunch at noon\n").unwrap();
        assert_eq!(c, vec![(Label::Spam, "WIN cash now".into()), (Label::Ham, "team lunch at noon".into())]);
    }

    #[test]
    fn rejects_bad_lines() {
        assert_eq!(parse_corpus("spam only"), Err(CorpusError::Format { line: 1 }));
        assert!(matches!(parse_corpus("ham\tok\neggs\tx"), Err(CorpusError::Label { line: 2, .. })));
    }
}
