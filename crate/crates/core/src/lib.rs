//! Core building blocks of the Hikester event service.
//!
//! Everything in this crate is pure in-memory logic: the shared domain
//! model, the geohash spatial index, the full-text index, the spam
//! classifiers, the interest-based recommender and the event parameter
//! optimizer. Persistence, change notification and HTTP wiring live in
//! `hikester-store` and `hikester-server`.
//!
//! Numerical code is generic over [`Scalar`] (`f32` or `f64`). The aliases
//! at the bottom of this file fix the scalar to `f64`, which is what the
//! service uses.

pub mod geo;
pub mod model;
pub mod optimizer;
pub mod recommend;
pub mod search;
pub mod spam;
pub mod text;

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

/// Floating point type used by the learning components: `f32` or `f64`.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + NumAssign + Sum + Debug + Display + Default + Send + Sync + 'static
{
    /// Lossy conversion from `f64`; used for literal constants.
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("finite literal")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

pub use geo::{GeoIndex, GeoQuery, GeoQueryEvent, Geohash};
pub use model::{EventRecord, GeoPoint, InteractionSample, Notification, UserProfile};
pub use search::{InvertedIndex, SearchQuery};
pub use text::{tokenize, TokenVector};

pub type NaiveBayes = spam::NaiveBayesModel<f64>;
pub type Perceptron = spam::PerceptronModel<f64>;
pub type Mlp = spam::MlpModel<f64>;
pub type Knn = spam::KnnModel;
pub type Recommender = recommend::Recommender<f64>;
pub type InterestProfile = recommend::InterestProfile<f64>;
pub type ParamOptimizer = optimizer::ParamOptimizer<f64>;
