//! Suggests start hour, weekday and places for a new event from the
//! attendance of past events.
//!
//! Two regressors (hour and weekday) score a candidate value for a tag set
//! by predicted attendance. Until the first retrain, or when the training
//! set is empty, a per-value mean-attendance histogram answers instead.
//! Popular places are an exact aggregation keyed by (tag, hour, weekday).

use std::collections::{BTreeMap, BTreeSet};
use std::sync::{Arc, Mutex, RwLock};

use serde::{Deserialize, Serialize};

use crate::geo::{decode_geohash, encode_geohash};
use crate::model::{EventRecord, GeoPoint};
use crate::spam::{mlp_train, MlpConfig, MlpModel};
use crate::Scalar;

pub const PLACE_PRECISION: usize = 5;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum OptimizerError {
    #[error("unknown activity kind {0:?}")]
    UnknownActivity(String),
    #[error("malformed activity: {0}")]
    Malformed(String),
    #[error("{0} out of range")]
    Range(&'static str),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingTuple {
    #[serde(with = "crate::model::set_as_map")]
    pub tags: BTreeSet<String>,
    pub hour: u8,
    pub day_of_week: u8,
    pub geo_cell: String,
    pub attendance: u32,
}

impl TrainingTuple {
    /// Tuple for a finished event; attendance is its final participant count.
    pub fn from_event(e: &EventRecord, precision: usize) -> Self {
        TrainingTuple {
            tags: e.tags.clone(),
            hour: e.start_hour,
            day_of_week: e.day_of_week,
            geo_cell: encode_geohash(e.location, precision).map(String::from).unwrap_or_default(),
            attendance: e.participants.len() as u32,
        }
    }

    fn check(&self) -> Result<(), OptimizerError> {
        if self.hour > 23 {
            return Err(OptimizerError::Range("hour"));
        }
        if self.day_of_week > 6 {
            return Err(OptimizerError::Range("day_of_week"));
        }
        Ok(())
    }
}

/// Which event parameter a model ranks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    Hour,
    Weekday,
}

impl Target {
    pub fn candidates(self) -> usize {
        match self {
            Target::Hour => 24,
            Target::Weekday => 7,
        }
    }

    fn value(self, t: &TrainingTuple) -> usize {
        match self {
            Target::Hour => t.hour as usize,
            Target::Weekday => t.day_of_week as usize,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig<S> {
    pub retrain_threshold: usize,
    /// Tags beyond this many distinct ones get no input unit.
    pub max_tags: usize,
    pub hidden_size: usize,
    pub epochs: usize,
    pub learning_rate: S,
    pub seed: u64,
    pub place_precision: usize,
}

impl<S: Scalar> Default for OptimizerConfig<S> {
    fn default() -> Self {
        OptimizerConfig {
            retrain_threshold: 50,
            max_tags: 64,
            hidden_size: 16,
            epochs: 1500,
            learning_rate: S::lit(0.5),
            seed: 0x0971,
            place_precision: PLACE_PRECISION,
        }
    }
}

/// Regressor over `tag one-hot ⊕ candidate one-hot`, predicting attendance
/// scaled by the largest attendance seen in training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamModel<S> {
    pub target: Target,
    pub tags: Vec<String>,
    pub net: MlpModel<S>,
    pub scale: S,
}

impl<S: Scalar> ParamModel<S> {
    fn encode(target: Target, tag_list: &[String], tags: &BTreeSet<String>, value: usize) -> Vec<S> {
        let mut x = vec![S::zero(); tag_list.len() + target.candidates()];
        for (i, t) in tag_list.iter().enumerate() {
            if tags.contains(t) {
                x[i] = S::one();
            }
        }
        x[tag_list.len() + value] = S::one();
        x
    }

    pub fn train(target: Target, tuples: &[TrainingTuple], cfg: &OptimizerConfig<S>) -> Option<Self> {
        if tuples.is_empty() {
            return None;
        }
        let mut tag_list: Vec<String> = Vec::new();
        for t in tuples {
            for tag in &t.tags {
                if tag_list.len() < cfg.max_tags && !tag_list.contains(tag) {
                    tag_list.push(tag.clone());
                }
            }
        }
        let max = tuples.iter().map(|t| t.attendance).max().unwrap_or(0).max(1);
        let scale = S::from_u32(max).unwrap();
        let data: Vec<(Vec<S>, S)> = tuples
            .iter()
            .map(|t| {
                let x = Self::encode(target, &tag_list, &t.tags, target.value(t));
                (x, S::from_u32(t.attendance).unwrap() / scale)
            })
            .collect();
        let mlp = MlpConfig::regressor(cfg.hidden_size, cfg.epochs, cfg.learning_rate, cfg.seed);
        let net = mlp_train(&data, &mlp).ok()?;
        Some(ParamModel { target, tags: tag_list, net, scale })
    }

    pub fn predict(&self, tags: &BTreeSet<String>, value: usize) -> S {
        let x = Self::encode(self.target, &self.tags, tags, value);
        self.net.predict_value(&x) * self.scale
    }
}

/// Descending score, ties by ascending candidate value.
fn rank<S: Scalar>(scores: Vec<S>) -> Vec<(u8, S)> {
    let mut ranked: Vec<(u8, S)> = scores.into_iter().enumerate().map(|(i, s)| (i as u8, s)).collect();
    ranked.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap_or(std::cmp::Ordering::Equal).then(a.0.cmp(&b.0)));
    ranked
}

/// Mean attendance per candidate value over tuples sharing a tag with the
/// query (all tuples if none do); zero where no tuple has that value.
pub fn histogram_scores<S: Scalar>(target: Target, tuples: &[TrainingTuple], tags: &BTreeSet<String>) -> Vec<S> {
    let related: Vec<&TrainingTuple> = tuples.iter().filter(|t| !t.tags.is_disjoint(tags)).collect();
    let pool: Vec<&TrainingTuple> = if related.is_empty() { tuples.iter().collect() } else { related };
    let n = target.candidates();
    let mut sum = vec![0u64; n];
    let mut count = vec![0u64; n];
    for t in pool {
        sum[target.value(t)] += t.attendance as u64;
        count[target.value(t)] += 1;
    }
    sum.iter()
        .zip(&count)
        .map(|(&s, &c)| if c == 0 { S::zero() } else { S::from_u64(s).unwrap() / S::from_u64(c).unwrap() })
        .collect()
}

/// (tag, hour, weekday) → geohash cell → cumulative attendance.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PopularPlacesIndex {
    cells: BTreeMap<(String, u8, u8), BTreeMap<String, u64>>,
}

impl PopularPlacesIndex {
    pub fn insert(&mut self, t: &TrainingTuple) {
        if t.geo_cell.is_empty() {
            return;
        }
        for tag in &t.tags {
            *self
                .cells
                .entry((tag.clone(), t.hour, t.day_of_week))
                .or_default()
                .entry(t.geo_cell.clone())
                .or_insert(0) += t.attendance as u64;
        }
    }

    pub fn counts(&self, tag: &str, hour: u8, day_of_week: u8) -> Option<&BTreeMap<String, u64>> {
        self.cells.get(&(tag.to_owned(), hour, day_of_week))
    }

    /// Top `k` cells by cumulative attendance, ties by cell code.
    pub fn top(&self, tag: &str, hour: u8, day_of_week: u8, k: usize) -> Vec<Place> {
        self.top_any([tag], hour, day_of_week, k)
    }

    /// As [`Self::top`] with attendance summed over several tags.
    pub fn top_any<'a>(
        &self,
        tags: impl IntoIterator<Item = &'a str>,
        hour: u8,
        day_of_week: u8,
        k: usize,
    ) -> Vec<Place> {
        let mut merged: BTreeMap<&str, u64> = BTreeMap::new();
        for tag in tags {
            for (cell, n) in self.counts(tag, hour, day_of_week).into_iter().flatten() {
                *merged.entry(cell.as_str()).or_insert(0) += n;
            }
        }
        let mut v: Vec<(&str, u64)> = merged.into_iter().collect();
        v.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        v.into_iter()
            .take(k)
            .map(|(cell, attendance)| Place {
                center: decode_geohash(cell).map(|b| b.center()).unwrap_or(GeoPoint { lat: 0.0, lon: 0.0 }),
                geo_cell: cell.to_owned(),
                attendance,
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Place {
    pub geo_cell: String,
    pub center: GeoPoint,
    pub attendance: u64,
}

/// The four kinds of user activity the optimizer reacts to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Activity {
    /// A finished event contributes a training tuple.
    EventCompleted { tuple: TrainingTuple },
    TimeHelp {
        #[serde(with = "crate::model::set_as_map")]
        tags: BTreeSet<String>,
    },
    DateHelp {
        #[serde(with = "crate::model::set_as_map")]
        tags: BTreeSet<String>,
    },
    /// Attendance is summed over the given tags.
    PlacesHelp {
        #[serde(with = "crate::model::set_as_map")]
        tags: BTreeSet<String>,
        hour: u8,
        day_of_week: u8,
        k: usize,
    },
}

impl Activity {
    /// Parses `{"kind": ..., ...}`; an unrecognised kind is an error.
    pub fn from_json(v: &serde_json::Value) -> Result<Self, OptimizerError> {
        const KINDS: [&str; 4] = ["event_completed", "time_help", "date_help", "places_help"];
        let kind = v.get("kind").and_then(|k| k.as_str()).unwrap_or("");
        if !KINDS.contains(&kind) {
            return Err(OptimizerError::UnknownActivity(kind.to_owned()));
        }
        serde_json::from_value(v.clone()).map_err(|e| OptimizerError::Malformed(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ActivityOutcome<S> {
    Recorded { retrain: Option<RetrainTicket> },
    Ranking(Vec<(u8, S)>),
    Places(Vec<Place>),
}

/// Snapshot of the training set handed to [`ParamOptimizer::retrain`].
#[derive(Debug, Clone, PartialEq)]
pub struct RetrainTicket {
    pub tuples: Arc<Vec<TrainingTuple>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainedModels<S> {
    pub time: Option<ParamModel<S>>,
    pub date: Option<ParamModel<S>>,
}

#[derive(Debug, Default)]
struct TrainingSet {
    tuples: Vec<TrainingTuple>,
    places: PopularPlacesIndex,
    pending: usize,
    retrains: usize,
}

/// Thread-safe optimizer: inserts serialize on the training set, suggestions
/// read an atomically swapped pair of models.
#[derive(Debug)]
pub struct ParamOptimizer<S> {
    config: OptimizerConfig<S>,
    training: Mutex<TrainingSet>,
    models: RwLock<Arc<TrainedModels<S>>>,
}

impl<S: Scalar> Default for ParamOptimizer<S> {
    fn default() -> Self {
        ParamOptimizer::new(OptimizerConfig::default())
    }
}

impl<S: Scalar> ParamOptimizer<S> {
    pub fn new(config: OptimizerConfig<S>) -> Self {
        ParamOptimizer {
            config,
            training: Mutex::new(TrainingSet::default()),
            models: RwLock::new(Arc::new(TrainedModels::default())),
        }
    }

    pub fn config(&self) -> &OptimizerConfig<S> {
        &self.config
    }

    pub fn pending_tuples(&self) -> usize {
        self.training.lock().unwrap().pending
    }

    pub fn retrain_count(&self) -> usize {
        self.training.lock().unwrap().retrains
    }

    pub fn tuple_count(&self) -> usize {
        self.training.lock().unwrap().tuples.len()
    }

    pub fn tuples(&self) -> Vec<TrainingTuple> {
        self.training.lock().unwrap().tuples.clone()
    }

    pub fn places(&self) -> PopularPlacesIndex {
        self.training.lock().unwrap().places.clone()
    }

    pub fn models(&self) -> Arc<TrainedModels<S>> {
        self.models.read().unwrap().clone()
    }

    /// Appends to the training sets and the places index. Every
    /// `retrain_threshold`-th insert hands back a ticket for [`Self::retrain`].
    pub fn insert_training_tuple(&self, t: TrainingTuple) -> Result<Option<RetrainTicket>, OptimizerError> {
        t.check()?;
        let mut set = self.training.lock().unwrap();
        set.places.insert(&t);
        set.tuples.push(t);
        set.pending += 1;
        if set.pending < self.config.retrain_threshold.max(1) {
            return Ok(None);
        }
        set.pending = 0;
        set.retrains += 1;
        Ok(Some(RetrainTicket { tuples: Arc::new(set.tuples.clone()) }))
    }

    /// Trains both regressors on the ticket's snapshot and swaps them in.
    /// An empty snapshot keeps the histogram fallback.
    pub fn retrain(&self, ticket: RetrainTicket) -> Arc<TrainedModels<S>> {
        let models = Arc::new(TrainedModels {
            time: ParamModel::train(Target::Hour, &ticket.tuples, &self.config),
            date: ParamModel::train(Target::Weekday, &ticket.tuples, &self.config),
        });
        *self.models.write().unwrap() = models.clone();
        models
    }

    /// Swaps in models trained elsewhere (e.g. restored from storage).
    pub fn install(&self, models: TrainedModels<S>) {
        *self.models.write().unwrap() = Arc::new(models);
    }

    fn suggest(&self, target: Target, tags: &BTreeSet<String>) -> Vec<(u8, S)> {
        let models = self.models();
        let model = match target {
            Target::Hour => models.time.as_ref(),
            Target::Weekday => models.date.as_ref(),
        };
        let scores = match model {
            Some(m) => (0..target.candidates()).map(|v| m.predict(tags, v)).collect(),
            None => histogram_scores(target, &self.training.lock().unwrap().tuples, tags),
        };
        rank(scores)
    }

    /// All 24 hours ranked by predicted attendance.
    pub fn suggest_time(&self, tags: &BTreeSet<String>) -> Vec<(u8, S)> {
        self.suggest(Target::Hour, tags)
    }

    /// All 7 weekdays (0 = Monday) ranked by predicted attendance.
    pub fn suggest_date(&self, tags: &BTreeSet<String>) -> Vec<(u8, S)> {
        self.suggest(Target::Weekday, tags)
    }

    pub fn popular_places(&self, tag: &str, hour: u8, day_of_week: u8, k: usize) -> Vec<Place> {
        self.training.lock().unwrap().places.top(tag, hour, day_of_week, k)
    }

    pub fn handle_activity(&self, a: Activity) -> Result<ActivityOutcome<S>, OptimizerError> {
        Ok(match a {
            Activity::EventCompleted { tuple } => {
                ActivityOutcome::Recorded { retrain: self.insert_training_tuple(tuple)? }
            }
            Activity::TimeHelp { tags } => ActivityOutcome::Ranking(self.suggest_time(&tags)),
            Activity::DateHelp { tags } => ActivityOutcome::Ranking(self.suggest_date(&tags)),
            Activity::PlacesHelp { tags, hour, day_of_week, k } => {
                let set = self.training.lock().unwrap();
                ActivityOutcome::Places(set.places.top_any(tags.iter().map(String::as_str), hour, day_of_week, k))
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn tuple(tags: &[&str], hour: u8, day: u8, cell: &str, attendance: u32) -> TrainingTuple {
        TrainingTuple {
            tags: tags.iter().map(|t| t.to_string()).collect(),
            hour,
            day_of_week: day,
            geo_cell: cell.into(),
            attendance,
        }
    }

    fn set(t: &[&str]) -> BTreeSet<String> {
        t.iter().map(|s| s.to_string()).collect()
    }

    fn small_cfg(n: usize) -> OptimizerConfig<f64> {
        OptimizerConfig { retrain_threshold: n, epochs: 200, ..Default::default() }
    }

    #[test]
    fn uniform_fallback_when_empty() {
        let opt = ParamOptimizer::<f64>::default();
        let ranking = opt.suggest_time(&set(&["football"]));
        assert_eq!(ranking.iter().map(|r| r.0).collect::<Vec<_>>(), (0..24).collect::<Vec<u8>>());
        assert!(ranking.iter().all(|r| r.1 == 0.0));
        let days = opt.suggest_date(&set(&["football"]));
        assert_eq!(days.iter().map(|r| r.0).collect::<Vec<_>>(), (0..7).collect::<Vec<u8>>());
    }

    #[test]
    fn histogram_fallback_prefers_busy_hour() {
        let opt = ParamOptimizer::<f64>::new(small_cfg(1000));
        opt.insert_training_tuple(tuple(&["chess"], 9, 1, "u4pru", 2)).unwrap();
        opt.insert_training_tuple(tuple(&["chess"], 19, 1, "u4pru", 8)).unwrap();
        opt.insert_training_tuple(tuple(&["opera"], 7, 1, "u4pru", 50)).unwrap();
        let r = opt.suggest_time(&set(&["chess"]));
        assert_eq!(r[0], (19, 8.0));
        assert_eq!(r[1], (9, 2.0));
    }

    #[test]
    fn threshold_semantics() {
        let opt = ParamOptimizer::<f64>::new(small_cfg(3));
        assert!(opt.insert_training_tuple(tuple(&["a"], 1, 1, "s0000", 1)).unwrap().is_none());
        assert!(opt.insert_training_tuple(tuple(&["a"], 1, 1, "s0000", 1)).unwrap().is_none());
        assert_eq!(opt.pending_tuples(), 2);
        let ticket = opt.insert_training_tuple(tuple(&["a"], 1, 1, "s0000", 1)).unwrap();
        assert_eq!(ticket.unwrap().tuples.len(), 3);
        assert_eq!(opt.pending_tuples(), 0);
        assert_eq!(opt.retrain_count(), 1);
    }

    #[test]
    fn activity_dispatch() {
        let opt = ParamOptimizer::<f64>::new(small_cfg(10));
        let a = Activity::EventCompleted { tuple: tuple(&["a"], 3, 2, "s0000", 4) };
        assert!(matches!(opt.handle_activity(a).unwrap(), ActivityOutcome::Recorded { retrain: None }));
        assert_eq!(opt.pending_tuples(), 1);
        let ActivityOutcome::Ranking(r) = opt.handle_activity(Activity::TimeHelp { tags: set(&["a"]) }).unwrap() else {
            panic!()
        };
        assert_eq!(r.len(), 24);
        let ActivityOutcome::Places(p) =
            opt.handle_activity(Activity::PlacesHelp { tags: set(&["a"]), hour: 3, day_of_week: 2, k: 5 }).unwrap()
        else {
            panic!()
        };
        assert_eq!(p.len(), 1);
        assert!(p.len() <= 5);
    }

    #[test]
    fn unknown_activity_kind() {
        let v = serde_json::json!({"kind": "teleport"});
        assert_eq!(Activity::from_json(&v), Err(OptimizerError::UnknownActivity("teleport".into())));
        let v = serde_json::json!({"kind": "time_help", "tags": ["x"]});
        assert!(matches!(Activity::from_json(&v), Ok(Activity::TimeHelp { .. })));
    }

    #[test]
    fn places_lookup() {
        let opt = ParamOptimizer::<f64>::default();
        assert!(opt.popular_places("x", 1, 1, 3).is_empty());
        opt.insert_training_tuple(tuple(&["x"], 1, 1, "u4pru", 7)).unwrap();
        let p = opt.popular_places("x", 1, 1, 3);
        assert_eq!(p.len(), 1);
        assert_eq!((p[0].geo_cell.as_str(), p[0].attendance), ("u4pru", 7));
        assert!(decode_geohash("u4pru").unwrap().contains(p[0].center));
    }

    #[test]
    fn retrain_on_empty_keeps_fallback() {
        let opt = ParamOptimizer::<f64>::default();
        let m = opt.retrain(RetrainTicket { tuples: Arc::new(Vec::new()) });
        assert!(m.time.is_none() && m.date.is_none());
        assert_eq!(opt.suggest_time(&set(&["a"]))[0], (0, 0.0));
    }

    #[test]
    fn retrain_is_deterministic() {
        let tuples: Vec<_> = (0..20).map(|i| tuple(&["a", "b"], (i % 24) as u8, (i % 7) as u8, "s0000", i)).collect();
        let cfg = small_cfg(100);
        let a = ParamModel::train(Target::Hour, &tuples, &cfg).unwrap();
        let b = ParamModel::train(Target::Hour, &tuples, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn trained_models_find_constructed_optimum() {
        let opt = ParamOptimizer::<f64>::new(OptimizerConfig { retrain_threshold: 48, ..Default::default() });
        let mut ticket = None;
        for hour in 0..24u8 {
            for rep in 0..2u8 {
                let n = if hour == 18 { 10 } else { 0 };
                ticket = opt.insert_training_tuple(tuple(&["football"], hour, (hour + rep) % 7, "u4pru", n)).unwrap();
            }
        }
        opt.retrain(ticket.expect("48th insert hands out a ticket"));
        assert!(opt.models().time.is_some());
        let r = opt.suggest_time(&set(&["football"]));
        assert_eq!(r[0].0, 18, "{r:?}");
        let mut hours: Vec<u8> = r.iter().map(|x| x.0).collect();
        hours.sort_unstable();
        assert_eq!(hours, (0..24).collect::<Vec<_>>());
    }

    #[test]
    fn places_merge_tags() {
        let opt = ParamOptimizer::<f64>::default();
        opt.insert_training_tuple(tuple(&["x"], 1, 1, "u4pru", 3)).unwrap();
        opt.insert_training_tuple(tuple(&["y"], 1, 1, "u4pru", 4)).unwrap();
        opt.insert_training_tuple(tuple(&["y"], 1, 1, "ezs42", 5)).unwrap();
        let p = opt.places().top_any(["x", "y"], 1, 1, 5);
        let got: Vec<_> = p.iter().map(|p| (p.geo_cell.as_str(), p.attendance)).collect();
        assert_eq!(got, [("u4pru", 7), ("ezs42", 5)]);
    }

    #[test]
    fn rejects_out_of_range_tuple() {
        let opt = ParamOptimizer::<f64>::default();
        assert_eq!(opt.insert_training_tuple(tuple(&["a"], 24, 0, "s", 1)), Err(OptimizerError::Range("hour")));
    }
}
