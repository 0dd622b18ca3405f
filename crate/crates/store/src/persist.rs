//! Append-only change log plus periodic whole-tree snapshots.
//!
//! `store.log` holds one JSON [`ChangeEvent`] per line. Snapshots are
//! `store.snapshot.<rev>.json` files containing `{rev, tree}`. Recovery
//! loads the newest readable snapshot and replays log records past its
//! revision. A torn last line (crash mid-append) is ignored.

use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::{ChangeEvent, ChangeKind, DocumentValue, StoreError};

pub const LOG_FILE: &str = "store.log";
const SNAPSHOT_PREFIX: &str = "store.snapshot.";
const SNAPSHOT_SUFFIX: &str = ".json";
/// Older snapshots beyond this many are deleted.
const KEEP_SNAPSHOTS: usize = 2;

#[derive(Debug, Serialize, Deserialize)]
struct Snapshot {
    rev: u64,
    tree: DocumentValue,
}

pub fn snapshot_path(dir: &Path, rev: u64) -> PathBuf {
    dir.join(format!("{SNAPSHOT_PREFIX}{rev}{SNAPSHOT_SUFFIX}"))
}

/// Snapshot revisions present in `dir`, ascending.
pub fn list_snapshots(dir: &Path) -> Result<Vec<u64>, StoreError> {
    let mut revs = Vec::new();
    for entry in fs::read_dir(dir)? {
        let name = entry?.file_name();
        let name = name.to_string_lossy();
        if let Some(rev) = name
            .strip_prefix(SNAPSHOT_PREFIX)
            .and_then(|r| r.strip_suffix(SNAPSHOT_SUFFIX))
            .and_then(|r| r.parse().ok())
        {
            revs.push(rev);
        }
    }
    revs.sort_unstable();
    Ok(revs)
}

/// Applies one logged change to a tree.
pub fn apply(tree: &mut DocumentValue, ev: &ChangeEvent) {
    match (&ev.kind, &ev.value) {
        (ChangeKind::Deleted, _) | (_, None) => {
            tree.remove_path(ev.path.segments());
        }
        (_, Some(v)) => tree.set_path(ev.path.segments(), v.clone()),
    }
}

/// Reads every complete record of a log file. A malformed final line is
/// treated as a torn write and dropped; a malformed line elsewhere is an
/// error.
pub fn read_log(path: &Path) -> Result<Vec<ChangeEvent>, StoreError> {
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(e.into()),
    };
    let lines: Vec<String> = BufReader::new(file).lines().collect::<Result<_, _>>()?;
    let mut out = Vec::with_capacity(lines.len());
    for (i, line) in lines.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<ChangeEvent>(line) {
            Ok(ev) => out.push(ev),
            Err(_) if i + 1 == lines.len() => {
                tracing::warn!(line = i + 1, "ignoring torn final log record");
            }
            Err(e) => return Err(StoreError::Corrupt { line: i + 1, message: e.to_string() }),
        }
    }
    Ok(out)
}

/// Folds a log into a tree, returning it with the last revision applied.
pub fn replay(events: &[ChangeEvent], mut tree: DocumentValue, after: u64) -> (DocumentValue, u64) {
    let mut rev = after;
    for ev in events.iter().filter(|e| e.rev > after) {
        apply(&mut tree, ev);
        rev = ev.rev;
    }
    (tree, rev)
}

/// Rebuilds the tree stored in `dir`.
pub fn recover(dir: &Path) -> Result<(DocumentValue, u64), StoreError> {
    let mut base = (DocumentValue::empty_map(), 0);
    for rev in list_snapshots(dir)?.into_iter().rev() {
        let text = fs::read_to_string(snapshot_path(dir, rev))?;
        match serde_json::from_str::<Snapshot>(&text) {
            Ok(s) => {
                base = (s.tree, s.rev);
                break;
            }
            Err(e) => tracing::warn!(rev, error = %e, "skipping unreadable snapshot"),
        }
    }
    let events = read_log(&dir.join(LOG_FILE))?;
    let (mut tree, rev) = replay(&events, base.0, base.1);
    if !matches!(tree, DocumentValue::Map(_)) {
        tree = DocumentValue::empty_map();
    }
    Ok((tree, rev))
}

/// Writer side, owned by the store's commit point.
#[derive(Debug)]
pub struct Persistence {
    dir: PathBuf,
    log: BufWriter<File>,
    sync: bool,
}

impl Persistence {
    pub fn open(dir: &Path, sync: bool) -> Result<Self, StoreError> {
        fs::create_dir_all(dir)?;
        let path = dir.join(LOG_FILE);
        // A torn tail would glue onto the next record; cut it off first.
        if let Ok(text) = fs::read_to_string(&path) {
            if !text.is_empty() && !text.ends_with('\n') {
                let keep = text.rfind('\n').map_or(0, |i| i + 1);
                let f = OpenOptions::new().write(true).open(&path)?;
                f.set_len(keep as u64)?;
            }
        }
        let file = OpenOptions::new().create(true).append(true).open(&path)?;
        Ok(Persistence { dir: dir.to_owned(), log: BufWriter::new(file), sync })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn append(&mut self, ev: &ChangeEvent) -> Result<(), StoreError> {
        serde_json::to_writer(&mut self.log, ev).map_err(|e| StoreError::InvalidValue(e.to_string()))?;
        self.log.write_all(b"\n")?;
        self.log.flush()?;
        if self.sync {
            self.log.get_ref().sync_data()?;
        }
        Ok(())
    }

    /// Writes a snapshot atomically (temp file + rename) and prunes old ones.
    pub fn snapshot(&mut self, tree: &DocumentValue, rev: u64) -> Result<(), StoreError> {
        let tmp = self.dir.join(format!("{SNAPSHOT_PREFIX}{rev}.tmp"));
        {
            let mut w = BufWriter::new(File::create(&tmp)?);
            serde_json::to_writer(&mut w, &Snapshot { rev, tree: tree.clone() })
                .map_err(|e| StoreError::InvalidValue(e.to_string()))?;
            w.flush()?;
            w.get_ref().sync_all()?;
        }
        fs::rename(&tmp, snapshot_path(&self.dir, rev))?;
        let revs = list_snapshots(&self.dir)?;
        for old in &revs[..revs.len().saturating_sub(KEEP_SNAPSHOTS)] {
            let _ = fs::remove_file(snapshot_path(&self.dir, *old));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::DocumentPath;

    fn ev(rev: u64, path: &str, v: Option<f64>) -> ChangeEvent {
        ChangeEvent {
            rev,
            path: DocumentPath::parse(path).unwrap(),
            kind: if v.is_some() { ChangeKind::Updated } else { ChangeKind::Deleted },
            value: v.map(DocumentValue::Number),
        }
    }

    #[test]
    fn torn_tail_is_ignored_but_middle_corruption_is_not() {
        let dir = tempfile::tempdir().unwrap();
        let mut p = Persistence::open(dir.path(), false).unwrap();
        p.append(&ev(1, "/a", Some(1.0))).unwrap();
        p.append(&ev(2, "/b", Some(2.0))).unwrap();
        drop(p);
        let log = dir.path().join(LOG_FILE);
        let mut text = fs::read_to_string(&log).unwrap();
        text.push_str("{\"rev\":3,\"pa");
        fs::write(&log, &text).unwrap();
        let (tree, rev) = recover(dir.path()).unwrap();
        assert_eq!(rev, 2);
        assert_eq!(tree.to_json(), serde_json::json!({"a": 1, "b": 2}));

        // reopening trims the torn bytes so new records stay parseable
        let mut p = Persistence::open(dir.path(), false).unwrap();
        p.append(&ev(3, "/a", None)).unwrap();
        assert_eq!(recover(dir.path()).unwrap().1, 3);

        fs::write(&log, "garbage\n{\"rev\":1,\"path\":\"/a\",\"kind\":\"created\",\"value\":1}\n").unwrap();
        assert!(matches!(recover(dir.path()), Err(StoreError::Corrupt { line: 1, .. })));
    }

    #[test]
    fn snapshot_plus_tail() {
        let dir = tempfile::tempdir().unwrap();
        let mut p = Persistence::open(dir.path(), false).unwrap();
        let mut tree = DocumentValue::empty_map();
        for rev in 1..=5 {
            let e = ev(rev, &format!("/k{rev}"), Some(rev as f64));
            p.append(&e).unwrap();
            apply(&mut tree, &e);
            if rev % 2 == 0 {
                p.snapshot(&tree, rev).unwrap();
            }
        }
        assert_eq!(list_snapshots(dir.path()).unwrap(), vec![2, 4]);
        assert_eq!(recover(dir.path()).unwrap(), (tree, 5));
    }

    #[test]
    fn floats_survive_the_log_bit_for_bit() {
        let dir = tempfile::tempdir().unwrap();
        let mut p = Persistence::open(dir.path(), false).unwrap();
        // values the fast float parser rounds to a neighbour
        let values = [15.005552617860559, 0.1 + 0.2, -47.35109956994541, 1e-300, f64::MAX];
        for (i, v) in values.iter().enumerate() {
            p.append(&ev(i as u64 + 1, &format!("/v{i}"), Some(*v))).unwrap();
        }
        let (tree, _) = recover(dir.path()).unwrap();
        for (i, v) in values.iter().enumerate() {
            let got = tree.get_path(&[format!("v{i}")]).unwrap();
            assert_eq!(got, &DocumentValue::Number(*v), "v{i}");
        }
    }
}
