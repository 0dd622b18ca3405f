//! Interest profiles, user groups and recommendation generation.
//!
//! Profiles are tag-weight vectors folded from interaction samples. Users
//! are grouped by spherical k-means over those vectors; a new event is
//! recommended to every user whose profile has cosine similarity of at
//! least `theta` with the event's tag set.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::model::{Action, EventRecord, EventStatus, InteractionSample, UserId};
use crate::Scalar;

pub type TagVector<S> = BTreeMap<String, S>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActionWeights<S> {
    pub join: S,
    pub view: S,
    pub search_filtered: S,
    pub decline: S,
}

impl<S: Scalar> Default for ActionWeights<S> {
    fn default() -> Self {
        ActionWeights { join: S::lit(2.0), view: S::lit(0.5), search_filtered: S::lit(0.25), decline: S::lit(-1.0) }
    }
}

impl<S: Scalar> ActionWeights<S> {
    pub fn delta(&self, action: Action) -> S {
        match action {
            Action::Join => self.join,
            Action::View => self.view,
            Action::SearchFiltered => self.search_filtered,
            Action::Decline => self.decline,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecommenderConfig<S> {
    pub weights: ActionWeights<S>,
    /// Minimum interest score for a recommendation.
    pub theta: S,
    /// Samples between retrains.
    pub retrain_threshold: usize,
    pub groups: usize,
    pub seed: u64,
    pub max_iterations: usize,
}

impl<S: Scalar> Default for RecommenderConfig<S> {
    fn default() -> Self {
        RecommenderConfig {
            weights: ActionWeights::default(),
            theta: S::lit(0.3),
            retrain_threshold: 100,
            groups: 8,
            seed: 0x5eed,
            max_iterations: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterestProfile<S> {
    pub user_id: UserId,
    pub weights: TagVector<S>,
    pub group_id: Option<usize>,
    pub samples_seen: u64,
}

impl<S: Scalar> InterestProfile<S> {
    pub fn new(user_id: impl Into<UserId>) -> Self {
        InterestProfile { user_id: user_id.into(), weights: BTreeMap::new(), group_id: None, samples_seen: 0 }
    }

    pub fn weight(&self, tag: &str) -> S {
        self.weights.get(tag).copied().unwrap_or_else(S::zero)
    }
}

/// Tags a sample speaks about: the filter tags of a search, otherwise the
/// tags of the event acted on.
pub fn sample_tags<'a>(s: &'a InteractionSample, event_tags: &'a BTreeSet<String>) -> &'a BTreeSet<String> {
    if s.action == Action::SearchFiltered {
        &s.filter_tags
    } else {
        event_tags
    }
}

/// Applies one sample to a profile; weights never drop below zero.
pub fn update_profile<S: Scalar>(
    profile: &mut InterestProfile<S>,
    s: &InteractionSample,
    event_tags: &BTreeSet<String>,
    weights: &ActionWeights<S>,
) {
    let delta = weights.delta(s.action);
    for tag in sample_tags(s, event_tags) {
        let w = profile.weights.entry(tag.clone()).or_insert_with(S::zero);
        *w = (*w + delta).max(S::zero());
    }
    profile.weights.retain(|_, w| *w > S::zero());
    profile.samples_seen += 1;
}

fn norm<S: Scalar>(v: &TagVector<S>) -> S {
    v.values().map(|w| *w * *w).sum::<S>().sqrt()
}

fn dot<S: Scalar>(a: &TagVector<S>, b: &TagVector<S>) -> S {
    let (small, large) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    small.iter().filter_map(|(t, w)| large.get(t).map(|v| *w * *v)).sum()
}

fn normalized<S: Scalar>(v: &TagVector<S>) -> Option<TagVector<S>> {
    let n = norm(v);
    (n > S::zero()).then(|| v.iter().map(|(t, w)| (t.clone(), *w / n)).collect())
}

/// Cosine similarity between profile weights and the binary vector of
/// `tags`, in `[0, 1]`; a zero profile scores 0.
pub fn score_interest<S: Scalar>(weights: &TagVector<S>, tags: &BTreeSet<String>) -> S {
    let n = norm(weights);
    if n == S::zero() || tags.is_empty() {
        return S::zero();
    }
    let overlap: S = tags.iter().filter_map(|t| weights.get(t).copied()).sum();
    let tag_norm = S::from_usize(tags.len()).unwrap().sqrt();
    (overlap / (n * tag_norm)).max(S::zero()).min(S::one())
}

/// Unit-length group centroids.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RecommendationModel<S> {
    pub centroids: Vec<TagVector<S>>,
}

impl<S: Scalar> RecommendationModel<S> {
    /// Index of the most similar centroid; ties go to the lower index.
    pub fn nearest(&self, v: &TagVector<S>) -> Option<usize> {
        let unit = normalized(v)?;
        let mut best: Option<(usize, S)> = None;
        for (i, c) in self.centroids.iter().enumerate() {
            let s = dot(&unit, c);
            if best.is_none_or(|(_, b)| s > b) {
                best = Some((i, s));
            }
        }
        best.map(|(i, _)| i)
    }
}

/// Spherical k-means over the non-zero vectors of `points`. Returns the
/// model and each point's cluster (None for zero vectors).
pub fn kmeans<S: Scalar>(
    points: &[TagVector<S>],
    k: usize,
    seed: u64,
    max_iterations: usize,
) -> (RecommendationModel<S>, Vec<Option<usize>>) {
    let units: Vec<(usize, TagVector<S>)> =
        points.iter().enumerate().filter_map(|(i, p)| normalized(p).map(|u| (i, u))).collect();
    let mut assignment = vec![None; points.len()];
    let k = k.min(units.len());
    if k == 0 {
        return (RecommendationModel::default(), assignment);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen = rand::seq::index::sample(&mut rng, units.len(), k).into_vec();
    chosen.sort_unstable();
    let mut centroids: Vec<TagVector<S>> = chosen.iter().map(|&i| units[i].1.clone()).collect();
    let mut labels: Vec<usize> = vec![usize::MAX; units.len()];

    for _ in 0..max_iterations.max(1) {
        let model = RecommendationModel { centroids: centroids.clone() };
        let next: Vec<usize> = units.iter().map(|(_, u)| model.nearest(u).unwrap()).collect();
        let changed = next != labels;
        labels = next;
        centroids = recompute(&units, &mut labels, k);
        if !changed {
            break;
        }
    }
    for (slot, (i, _)) in labels.iter().zip(&units) {
        assignment[*i] = Some(*slot);
    }
    (RecommendationModel { centroids }, assignment)
}

/// Recomputes centroids, reseeding each empty cluster with the point
/// farthest from its own centroid.
fn recompute<S: Scalar>(units: &[(usize, TagVector<S>)], labels: &mut [usize], k: usize) -> Vec<TagVector<S>> {
    loop {
        let mut sums: Vec<TagVector<S>> = vec![BTreeMap::new(); k];
        let mut sizes = vec![0usize; k];
        for ((_, u), &l) in units.iter().zip(labels.iter()) {
            sizes[l] += 1;
            for (t, w) in u {
                *sums[l].entry(t.clone()).or_insert_with(S::zero) += *w;
            }
        }
        let centroids: Vec<Option<TagVector<S>>> = sums.iter().map(normalized).collect();
        let Some(empty) = centroids.iter().position(Option::is_none) else {
            return centroids.into_iter().map(Option::unwrap).collect();
        };
        // farthest point among clusters that can spare one
        let mut far: Option<(usize, S)> = None;
        for (i, ((_, u), &l)) in units.iter().zip(labels.iter()).enumerate() {
            if sizes[l] < 2 {
                continue;
            }
            let sim = centroids[l].as_ref().map_or(S::zero(), |c| dot(u, c));
            if far.is_none_or(|(_, s)| sim < s) {
                far = Some((i, sim));
            }
        }
        let (i, _) = far.expect("k never exceeds the number of points");
        labels[i] = empty;
    }
}

#[derive(Debug, Clone)]
pub struct Recommender<S> {
    config: RecommenderConfig<S>,
    profiles: BTreeMap<UserId, InterestProfile<S>>,
    samples: Vec<(InteractionSample, BTreeSet<String>)>,
    model: Arc<RecommendationModel<S>>,
    pending: usize,
    retrains: usize,
}

impl<S: Scalar> Default for Recommender<S> {
    fn default() -> Self {
        Recommender::new(RecommenderConfig::default())
    }
}

impl<S: Scalar> Recommender<S> {
    pub fn new(config: RecommenderConfig<S>) -> Self {
        Recommender {
            config,
            profiles: BTreeMap::new(),
            samples: Vec::new(),
            model: Arc::new(RecommendationModel::default()),
            pending: 0,
            retrains: 0,
        }
    }

    pub fn config(&self) -> &RecommenderConfig<S> {
        &self.config
    }

    pub fn ensure_user(&mut self, user: &str) {
        self.profiles.entry(user.to_owned()).or_insert_with(|| InterestProfile::new(user));
    }

    pub fn profile(&self, user: &str) -> Option<&InterestProfile<S>> {
        self.profiles.get(user)
    }

    pub fn profiles(&self) -> impl Iterator<Item = &InterestProfile<S>> {
        self.profiles.values()
    }

    pub fn samples(&self) -> &[(InteractionSample, BTreeSet<String>)] {
        &self.samples
    }

    pub fn pending_samples(&self) -> usize {
        self.pending
    }

    pub fn retrain_count(&self) -> usize {
        self.retrains
    }

    pub fn model(&self) -> Arc<RecommendationModel<S>> {
        self.model.clone()
    }

    /// Appends a sample, updates the user's profile and retrains when
    /// enough samples have accumulated. Returns the new model if one was
    /// built.
    pub fn record_interaction(
        &mut self,
        s: InteractionSample,
        event_tags: &BTreeSet<String>,
    ) -> Option<Arc<RecommendationModel<S>>> {
        let weights = self.config.weights;
        let profile = self.profiles.entry(s.user_id.clone()).or_insert_with(|| InterestProfile::new(&s.user_id));
        update_profile(profile, &s, event_tags, &weights);
        profile.group_id = self.model.nearest(&profile.weights);
        self.samples.push((s, event_tags.clone()));
        self.pending += 1;
        self.retrain_if_needed()
    }

    pub fn assign_group(&self, profile: &InterestProfile<S>) -> Option<usize> {
        self.model.nearest(&profile.weights)
    }

    pub fn retrain_if_needed(&mut self) -> Option<Arc<RecommendationModel<S>>> {
        if self.pending < self.config.retrain_threshold {
            return None;
        }
        Some(self.retrain())
    }

    /// Re-clusters every profile and swaps in the new model.
    pub fn retrain(&mut self) -> Arc<RecommendationModel<S>> {
        let ids: Vec<UserId> = self.profiles.keys().cloned().collect();
        let points: Vec<TagVector<S>> = ids.iter().map(|id| self.profiles[id].weights.clone()).collect();
        let (model, groups) = kmeans(&points, self.config.groups, self.config.seed, self.config.max_iterations);
        for (id, g) in ids.iter().zip(groups) {
            self.profiles.get_mut(id).unwrap().group_id = g;
        }
        self.model = Arc::new(model);
        self.pending = 0;
        self.retrains += 1;
        self.model.clone()
    }

    /// Users scoring at least `theta`, excluding the creator and current
    /// participants, best first with ties by user id. Events that are not
    /// active produce nothing.
    pub fn recommendations(&self, e: &EventRecord) -> Vec<(UserId, S)> {
        if e.status != EventStatus::Active {
            return Vec::new();
        }
        let mut out: Vec<(UserId, S)> = self
            .profiles
            .values()
            .filter(|p| p.user_id != e.creator && !e.participants.contains(&p.user_id))
            .map(|p| (p.user_id.clone(), score_interest(&p.weights, &e.tags)))
            .filter(|(_, s)| *s >= self.config.theta)
            .collect();
        out.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then_with(|| a.0.cmp(&b.0)));
        out
    }

    pub fn generate_recommendations(&self, e: &EventRecord) -> Vec<UserId> {
        self.recommendations(e).into_iter().map(|(u, _)| u).collect()
    }
}
