//! HTTP handlers. List endpoints answer `{items, next_cursor}` where the
//! cursor is an opaque offset string.

use std::collections::BTreeSet;
use std::sync::Arc;

use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::NaiveDate;
use hikester_core::geo::GeoFilter;
use hikester_core::model::{normalize_tags, Action, EventStatus};
use hikester_core::optimizer::{Activity, ActivityOutcome, Place};
use hikester_core::{GeoPoint, GeoQuery, Notification, SearchQuery, UserProfile};
use serde::{Deserialize, Serialize};

use crate::app::{App, EventDoc, NewEvent, NewUser, UserDoc};
use crate::error::ApiError;

type Shared = State<Arc<App>>;
type ApiResult<T> = Result<Json<T>, ApiError>;

pub const MAX_LIMIT: usize = 1000;

pub fn router(app: Arc<App>) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/users", post(create_user))
        .route("/users/{id}", get(get_user))
        .route("/events", post(create_event))
        .route("/events/nearby", get(nearby))
        .route("/events/{id}", get(get_event))
        .route("/events/{id}/join", post(join))
        .route("/events/{id}/leave", post(leave))
        .route("/search", get(search))
        .route("/suggest/time", get(suggest_time))
        .route("/suggest/date", get(suggest_date))
        .route("/suggest/places", get(suggest_places))
        .route("/recommendations/{user}", get(recommendations))
        .route("/notifications/{user}", get(notifications))
        .route("/subscribe", get(crate::ws::subscribe))
        .with_state(app)
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Page<T> {
    pub items: Vec<T>,
    pub next_cursor: Option<String>,
}

pub fn paginate<T>(
    items: Vec<T>,
    cursor: Option<&str>,
    limit: Option<usize>,
    default_limit: usize,
) -> Result<Page<T>, ApiError> {
    let offset: usize = match cursor {
        None | Some("") => 0,
        Some(c) => c.parse().map_err(|_| ApiError::bad_request("invalid cursor"))?,
    };
    let limit = limit.unwrap_or(default_limit);
    if limit == 0 || limit > MAX_LIMIT {
        return Err(ApiError::bad_request(format!("limit must be in 1..={MAX_LIMIT}")));
    }
    let total = items.len();
    let items: Vec<T> = items.into_iter().skip(offset).take(limit).collect();
    let end = offset.saturating_add(items.len());
    let next_cursor = (end < total).then(|| end.to_string());
    Ok(Page { items, next_cursor })
}

/// `"a,b"` → normalized tag set.
fn parse_tags(raw: Option<&str>) -> BTreeSet<String> {
    normalize_tags(raw.unwrap_or("").split(','))
}

fn hour_range(min: Option<u8>, max: Option<u8>) -> Result<Option<(u8, u8)>, ApiError> {
    match (min, max) {
        (None, None) => Ok(None),
        (lo, hi) => {
            let (lo, hi) = (lo.unwrap_or(0), hi.unwrap_or(23));
            if lo > hi || hi > 23 {
                return Err(ApiError::bad_request("hour range must satisfy 0 <= hour_min <= hour_max <= 23"));
            }
            Ok(Some((lo, hi)))
        }
    }
}

async fn health(State(app): Shared) -> Json<serde_json::Value> {
    Json(serde_json::json!({ "status": "ok", "stats": app.stats() }))
}

async fn create_user(State(app): Shared, Json(req): Json<NewUser>) -> Result<(StatusCode, Json<UserDoc>), ApiError> {
    Ok((StatusCode::CREATED, Json(app.create_user(req)?)))
}

async fn get_user(State(app): Shared, Path(id): Path<String>) -> ApiResult<UserProfile> {
    Ok(Json(app.user_profile(&id)?))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Created {
    pub id: String,
    pub rev: u64,
    pub created_wall: String,
}

async fn create_event(State(app): Shared, Json(req): Json<NewEvent>) -> Result<(StatusCode, Json<Created>), ApiError> {
    let doc = app.create_event(req)?;
    let body = Created { id: doc.record.id, rev: doc.record.created_at, created_wall: doc.created_wall };
    Ok((StatusCode::CREATED, Json(body)))
}

#[derive(Debug, Deserialize)]
struct ViewerQuery {
    user: Option<String>,
}

/// Returns the event; with `?user=` the view is recorded for that user.
async fn get_event(State(app): Shared, Path(id): Path<String>, Query(q): Query<ViewerQuery>) -> ApiResult<EventDoc> {
    let doc = app.event(&id)?;
    if let Some(user) = q.user.filter(|u| app.user_exists(u)) {
        app.record_sample(&user, &doc.record, Action::View, BTreeSet::new())?;
    }
    Ok(Json(doc))
}

#[derive(Debug, Deserialize)]
pub struct Participation {
    pub user: String,
}

async fn join(State(app): Shared, Path(id): Path<String>, Json(p): Json<Participation>) -> ApiResult<EventDoc> {
    Ok(Json(app.join(&id, &p.user)?))
}

async fn leave(State(app): Shared, Path(id): Path<String>, Json(p): Json<Participation>) -> ApiResult<EventDoc> {
    Ok(Json(app.leave(&id, &p.user)?))
}

#[derive(Debug, Deserialize)]
struct SearchParams {
    q: Option<String>,
    tags: Option<String>,
    hour_min: Option<u8>,
    hour_max: Option<u8>,
    date_from: Option<NaiveDate>,
    date_to: Option<NaiveDate>,
    limit: Option<usize>,
    cursor: Option<String>,
    user: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Scored {
    pub event: EventDoc,
    pub score: f64,
}

async fn search(State(app): Shared, Query(p): Query<SearchParams>) -> ApiResult<Page<Scored>> {
    let tags = parse_tags(p.tags.as_deref());
    let date_range = match (p.date_from, p.date_to) {
        (None, None) => None,
        (from, to) => Some((from.unwrap_or(NaiveDate::MIN), to.unwrap_or(NaiveDate::MAX))),
    };
    let query = SearchQuery {
        text_terms: p.q.into_iter().collect(),
        tags: tags.clone(),
        hour_range: hour_range(p.hour_min, p.hour_max)?,
        date_range,
        limit: usize::MAX,
    };
    query.check().map_err(|e| ApiError::bad_request(e.to_string()))?;
    let hits = app.search.read().search(&query).map_err(|e| ApiError::bad_request(e.to_string()))?;
    let scored: Vec<Scored> = hits
        .into_iter()
        .filter_map(|(id, score)| app.event_doc(&id).ok().flatten().map(|event| Scored { event, score }))
        .collect();
    let page = paginate(scored, p.cursor.as_deref(), p.limit, app.config.page_limit)?;
    if let Some(user) = p.user.filter(|u| !tags.is_empty() && app.user_exists(u)) {
        for hit in &page.items {
            app.record_sample(&user, &hit.event.record, Action::SearchFiltered, tags.clone())?;
        }
    }
    Ok(Json(page))
}

#[derive(Debug, Deserialize)]
struct NearbyParams {
    lat: f64,
    lon: f64,
    radius_km: f64,
    tags: Option<String>,
    hour_min: Option<u8>,
    hour_max: Option<u8>,
    limit: Option<usize>,
    cursor: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Nearby {
    pub event: EventDoc,
    pub distance_km: f64,
}

pub fn geo_query(
    lat: f64,
    lon: f64,
    radius_km: f64,
    tags: BTreeSet<String>,
    hours: Option<(u8, u8)>,
) -> Result<GeoQuery, ApiError> {
    let center = GeoPoint::new(lat, lon).map_err(|e| ApiError::bad_request(e.to_string()))?;
    let q = GeoQuery::new(center, radius_km).map_err(|e| ApiError::bad_request(e.to_string()))?;
    Ok(q.with_filter(GeoFilter { tags, hour_range: hours }))
}

async fn nearby(State(app): Shared, Query(p): Query<NearbyParams>) -> ApiResult<Page<Nearby>> {
    let q = geo_query(p.lat, p.lon, p.radius_km, parse_tags(p.tags.as_deref()), hour_range(p.hour_min, p.hour_max)?)?;
    let hits = app.geo.read().radius_query(&q).map_err(|e| ApiError::bad_request(e.to_string()))?;
    let items: Vec<Nearby> = hits
        .into_iter()
        .filter_map(|(id, distance_km)| {
            let event = app.event_doc(&id).ok().flatten()?;
            (event.record.status == EventStatus::Active).then_some(Nearby { event, distance_km })
        })
        .collect();
    Ok(Json(paginate(items, p.cursor.as_deref(), p.limit, app.config.page_limit)?))
}

#[derive(Debug, Deserialize)]
struct SuggestParams {
    tags: Option<String>,
    hour: Option<u8>,
    day_of_week: Option<u8>,
    k: Option<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Ranked {
    pub value: u8,
    pub score: f64,
}

fn required_tags(p: &SuggestParams) -> Result<BTreeSet<String>, ApiError> {
    let tags = parse_tags(p.tags.as_deref());
    if tags.is_empty() {
        return Err(ApiError::bad_request("tags required"));
    }
    Ok(tags)
}

fn ranking(app: &App, activity: Activity) -> ApiResult<Page<Ranked>> {
    match app.optimizer.handle_activity(activity).map_err(|e| ApiError::bad_request(e.to_string()))? {
        ActivityOutcome::Ranking(r) => Ok(Json(Page {
            items: r.into_iter().map(|(value, score)| Ranked { value, score }).collect(),
            next_cursor: None,
        })),
        _ => Err(ApiError::internal("unexpected optimizer outcome")),
    }
}

async fn suggest_time(State(app): Shared, Query(p): Query<SuggestParams>) -> ApiResult<Page<Ranked>> {
    ranking(&app, Activity::TimeHelp { tags: required_tags(&p)? })
}

async fn suggest_date(State(app): Shared, Query(p): Query<SuggestParams>) -> ApiResult<Page<Ranked>> {
    ranking(&app, Activity::DateHelp { tags: required_tags(&p)? })
}

async fn suggest_places(State(app): Shared, Query(p): Query<SuggestParams>) -> ApiResult<Page<Place>> {
    let tags = required_tags(&p)?;
    let (Some(hour), Some(day_of_week)) = (p.hour, p.day_of_week) else {
        return Err(ApiError::bad_request("hour and day_of_week required"));
    };
    if hour > 23 || day_of_week > 6 {
        return Err(ApiError::bad_request("hour or day_of_week out of range"));
    }
    let k = p.k.unwrap_or(10).clamp(1, MAX_LIMIT);
    match app.optimizer.handle_activity(Activity::PlacesHelp { tags, hour, day_of_week, k }) {
        Ok(ActivityOutcome::Places(items)) => Ok(Json(Page { items, next_cursor: None })),
        Ok(_) => Err(ApiError::internal("unexpected optimizer outcome")),
        Err(e) => Err(ApiError::bad_request(e.to_string())),
    }
}

#[derive(Debug, Deserialize)]
struct PageParams {
    limit: Option<usize>,
    cursor: Option<String>,
}

async fn recommendations(
    State(app): Shared,
    Path(user): Path<String>,
    Query(p): Query<PageParams>,
) -> ApiResult<Page<EventDoc>> {
    let items = app.recommendations_for(&user)?;
    Ok(Json(paginate(items, p.cursor.as_deref(), p.limit, app.config.page_limit)?))
}

async fn notifications(
    State(app): Shared,
    Path(user): Path<String>,
    Query(p): Query<PageParams>,
) -> ApiResult<Page<Notification>> {
    if !app.user_exists(&user) {
        return Err(ApiError::not_found(format!("user {user:?}")));
    }
    let items = app.notifications(&user)?;
    Ok(Json(paginate(items, p.cursor.as_deref(), p.limit, app.config.page_limit)?))
}
