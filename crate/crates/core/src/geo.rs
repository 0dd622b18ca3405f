//! Geohash spatial index with one-shot and live radius queries.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::model::{normalize_lon, EventId, GeoPoint};
use crate::Scalar;

pub const EARTH_RADIUS_KM: f64 = 6371.0;
pub const MAX_PRECISION: usize = 12;
const BASE32: &[u8; 32] = b"0123456789bcdefghjkmnpqrstuvwxyz";

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GeoError {
    #[error("invalid geohash")]
    InvalidGeohash,
    #[error("geohash precision must be within 1..=12, got {0}")]
    Precision(usize),
    #[error("radius must be a positive finite number of kilometres")]
    Radius,
    #[error("invalid point")]
    Point,
}

/// Great-circle distance on a sphere of radius `radius`, inputs in degrees.
pub fn haversine<S: Scalar>(lat1: S, lon1: S, lat2: S, lon2: S, radius: S) -> S {
    let two = S::lit(2.0);
    let (p1, p2) = (lat1.to_radians(), lat2.to_radians());
    let dp = p2 - p1;
    let dl = (lon2 - lon1).to_radians();
    let h = (dp / two).sin().powi(2) + p1.cos() * p2.cos() * (dl / two).sin().powi(2);
    two * radius * h.sqrt().min(S::one()).asin()
}

pub fn haversine_km(a: GeoPoint, b: GeoPoint) -> f64 {
    haversine(a.lat, a.lon, b.lat, b.lon, EARTH_RADIUS_KM)
}

/// Validated base32 geohash.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Geohash(String);

impl Geohash {
    pub fn parse(code: &str) -> Result<Self, GeoError> {
        if code.is_empty() || code.len() > MAX_PRECISION || !code.bytes().all(|b| BASE32.contains(&b)) {
            return Err(GeoError::InvalidGeohash);
        }
        Ok(Geohash(code.to_owned()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn precision(&self) -> usize {
        self.0.len()
    }

    pub fn bounds(&self) -> BoundingBox {
        decode_geohash(&self.0).expect("validated geohash")
    }
}

impl TryFrom<String> for Geohash {
    type Error = GeoError;
    fn try_from(s: String) -> Result<Self, GeoError> {
        Geohash::parse(&s)
    }
}

impl From<Geohash> for String {
    fn from(g: Geohash) -> String {
        g.0
    }
}

impl fmt::Display for Geohash {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub lat_min: f64,
    pub lat_max: f64,
    pub lon_min: f64,
    pub lon_max: f64,
}

impl BoundingBox {
    pub fn center(&self) -> GeoPoint {
        GeoPoint { lat: (self.lat_min + self.lat_max) / 2.0, lon: (self.lon_min + self.lon_max) / 2.0 }
    }

    pub fn contains(&self, p: GeoPoint) -> bool {
        (self.lat_min..=self.lat_max).contains(&p.lat) && (self.lon_min..=self.lon_max).contains(&p.lon)
    }

    pub fn height(&self) -> f64 {
        self.lat_max - self.lat_min
    }

    pub fn width(&self) -> f64 {
        self.lon_max - self.lon_min
    }
}

/// Interleaved bisection encoding, longitude bit first. Values on a
/// bisection midpoint go to the upper half.
pub fn encode_geohash(p: GeoPoint, precision: usize) -> Result<Geohash, GeoError> {
    if !(1..=MAX_PRECISION).contains(&precision) {
        return Err(GeoError::Precision(precision));
    }
    if !p.is_valid() {
        return Err(GeoError::Point);
    }
    let (mut lat_lo, mut lat_hi) = (-90.0f64, 90.0f64);
    let (mut lon_lo, mut lon_hi) = (-180.0f64, 180.0f64);
    let mut code = String::with_capacity(precision);
    let mut even = true;
    for _ in 0..precision {
        let mut idx = 0usize;
        for _ in 0..5 {
            idx <<= 1;
            let (value, lo, hi) =
                if even { (p.lon, &mut lon_lo, &mut lon_hi) } else { (p.lat, &mut lat_lo, &mut lat_hi) };
            let mid = (*lo + *hi) / 2.0;
            if value >= mid {
                idx |= 1;
                *lo = mid;
            } else {
                *hi = mid;
            }
            even = !even;
        }
        code.push(BASE32[idx] as char);
    }
    Ok(Geohash(code))
}

/// Exact cell bounds of `code`.
pub fn decode_geohash(code: &str) -> Result<BoundingBox, GeoError> {
    if code.is_empty() || code.len() > MAX_PRECISION {
        return Err(GeoError::InvalidGeohash);
    }
    let mut b = BoundingBox { lat_min: -90.0, lat_max: 90.0, lon_min: -180.0, lon_max: 180.0 };
    let mut even = true;
    for ch in code.bytes() {
        let idx = BASE32.iter().position(|&c| c == ch).ok_or(GeoError::InvalidGeohash)?;
        for shift in (0..5).rev() {
            let upper = (idx >> shift) & 1 == 1;
            let (lo, hi) = if even { (&mut b.lon_min, &mut b.lon_max) } else { (&mut b.lat_min, &mut b.lat_max) };
            let mid = (*lo + *hi) / 2.0;
            if upper {
                *lo = mid;
            } else {
                *hi = mid;
            }
            even = !even;
        }
    }
    Ok(b)
}

/// Cell (height, width) in degrees at `precision`.
pub fn cell_size_deg(precision: usize) -> (f64, f64) {
    let bits = 5 * precision as i32;
    let lon_bits = (bits + 1) / 2;
    let lat_bits = bits / 2;
    (180.0 / 2f64.powi(lat_bits), 360.0 / 2f64.powi(lon_bits))
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GeoFilter {
    #[serde(default)]
    pub tags: BTreeSet<String>,
    /// Inclusive start-hour range.
    #[serde(default)]
    pub hour_range: Option<(u8, u8)>,
}

impl GeoFilter {
    fn accepts(&self, e: &GeoEntry) -> bool {
        if !self.tags.iter().all(|t| e.tags.contains(t)) {
            return false;
        }
        match (self.hour_range, e.start_hour) {
            (None, _) => true,
            (Some((lo, hi)), Some(h)) => lo <= h && h <= hi,
            (Some(_), None) => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeoQuery {
    pub center: GeoPoint,
    pub radius_km: f64,
    #[serde(default)]
    pub filter: GeoFilter,
}

impl GeoQuery {
    pub fn new(center: GeoPoint, radius_km: f64) -> Result<Self, GeoError> {
        let q = GeoQuery { center, radius_km, filter: GeoFilter::default() };
        q.check()?;
        Ok(q)
    }

    pub fn with_filter(mut self, filter: GeoFilter) -> Self {
        self.filter = filter;
        self
    }

    pub fn check(&self) -> Result<(), GeoError> {
        if !(self.radius_km.is_finite() && self.radius_km > 0.0) {
            return Err(GeoError::Radius);
        }
        if !self.center.is_valid() {
            return Err(GeoError::Point);
        }
        Ok(())
    }

    fn admits(&self, e: &GeoEntry) -> Option<f64> {
        let d = haversine_km(self.center, e.point);
        (d <= self.radius_km && self.filter.accepts(e)).then_some(d)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Cover {
    /// Candidate cell prefixes whose union contains the query disc.
    Cells(BTreeSet<String>),
    /// The disc cannot be covered by a 3x3 block of cells (too large, or
    /// it reaches a pole); every indexed point is a candidate.
    FullScan,
}

/// Plans the candidate cells for a radius query: the finest precision at
/// which a cell is more than twice the disc's angular extent on both axes,
/// then the center cell and its eight neighbours.
pub fn cover_radius(q: &GeoQuery) -> Result<Cover, GeoError> {
    q.check()?;
    let ang = q.radius_km / EARTH_RADIUS_KM;
    if ang >= std::f64::consts::FRAC_PI_2 {
        return Ok(Cover::FullScan);
    }
    let dlat = ang.to_degrees();
    let lat = q.center.lat;
    if lat.abs() + dlat >= 90.0 {
        return Ok(Cover::FullScan);
    }
    // widest longitudinal reach of a spherical cap
    let ratio = ang.sin() / lat.to_radians().cos();
    if ratio >= 1.0 {
        return Ok(Cover::FullScan);
    }
    let dlon = ratio.asin().to_degrees();
    let margin = 1.0 + 1e-9;
    let precision = (1..=MAX_PRECISION).rev().find(|&p| {
        let (h, w) = cell_size_deg(p);
        h > 2.0 * dlat * margin && w > 2.0 * dlon * margin
    });
    let Some(precision) = precision else {
        return Ok(Cover::FullScan);
    };
    let center = encode_geohash(q.center, precision)?.bounds().center();
    let (h, w) = cell_size_deg(precision);
    let mut cells = BTreeSet::new();
    for dy in [-1.0, 0.0, 1.0] {
        let nlat = center.lat + dy * h;
        if !(-90.0..=90.0).contains(&nlat) {
            continue;
        }
        for dx in [-1.0, 0.0, 1.0] {
            let p = GeoPoint { lat: nlat, lon: normalize_lon(center.lon + dx * w) };
            cells.insert(encode_geohash(p, precision)?.0);
        }
    }
    Ok(Cover::Cells(cells))
}

/// One live-query delta.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeoQueryEvent {
    pub kind: GeoEventKind,
    pub event_id: EventId,
    pub location: GeoPoint,
    pub distance_km: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeoEventKind {
    Entered,
    Exited,
    Moved,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeoEntry {
    pub point: GeoPoint,
    pub tags: BTreeSet<String>,
    pub start_hour: Option<u8>,
}

impl GeoEntry {
    pub fn at(point: GeoPoint) -> Self {
        GeoEntry { point, tags: BTreeSet::new(), start_hour: None }
    }
}

/// Receives live-query deltas; returning `false` reports a closed sink and
/// drops the subscription.
pub type GeoSink = Box<dyn FnMut(GeoQueryEvent) -> bool + Send + Sync>;

pub type WatchId = u64;

struct Watcher {
    query: GeoQuery,
    members: BTreeMap<EventId, GeoPoint>,
    sink: GeoSink,
}

#[derive(Default)]
pub struct GeoIndex {
    by_hash: BTreeSet<(String, EventId)>,
    entries: HashMap<EventId, (String, GeoEntry)>,
    watchers: BTreeMap<WatchId, Watcher>,
    next_watch: WatchId,
}

impl fmt::Debug for GeoIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GeoIndex")
            .field("entries", &self.entries.len())
            .field("watchers", &self.watchers.len())
            .finish()
    }
}

impl GeoIndex {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&GeoEntry> {
        self.entries.get(id).map(|(_, e)| e)
    }

    /// Ids and locations currently indexed, sorted by id.
    pub fn points(&self) -> Vec<(EventId, GeoPoint)> {
        let mut v: Vec<_> = self.entries.iter().map(|(id, (_, e))| (id.clone(), e.point)).collect();
        v.sort_by(|a, b| a.0.cmp(&b.0));
        v
    }

    pub fn put(&mut self, id: &str, point: GeoPoint) -> Result<(), GeoError> {
        self.put_entry(id, GeoEntry::at(point))
    }

    /// Inserts or relocates `id`, then notifies live queries.
    pub fn put_entry(&mut self, id: &str, entry: GeoEntry) -> Result<(), GeoError> {
        let hash = encode_geohash(entry.point, MAX_PRECISION)?.0;
        if let Some((old_hash, old)) = self.entries.get(id) {
            if *old == entry {
                return Ok(());
            }
            self.by_hash.remove(&(old_hash.clone(), id.to_owned()));
        }
        self.by_hash.insert((hash.clone(), id.to_owned()));
        self.entries.insert(id.to_owned(), (hash, entry.clone()));
        self.notify(id, Some(&entry));
        Ok(())
    }

    pub fn remove(&mut self, id: &str) {
        if let Some((hash, _)) = self.entries.remove(id) {
            self.by_hash.remove(&(hash, id.to_owned()));
            self.notify(id, None);
        }
    }

    fn notify(&mut self, id: &str, entry: Option<&GeoEntry>) {
        let mut closed = Vec::new();
        for (&wid, w) in self.watchers.iter_mut() {
            let now = entry.and_then(|e| w.query.admits(e).map(|d| (e.point, d)));
            let before = w.members.get(id).copied();
            let ev = match (before, now) {
                (None, Some((p, d))) => Some((GeoEventKind::Entered, p, d)),
                (Some(old), Some((p, d))) if old != p => Some((GeoEventKind::Moved, p, d)),
                (Some(old), None) => {
                    let p = entry.map(|e| e.point).unwrap_or(old);
                    Some((GeoEventKind::Exited, p, haversine_km(w.query.center, p)))
                }
                _ => None,
            };
            match now {
                Some((p, _)) => {
                    w.members.insert(id.to_owned(), p);
                }
                None => {
                    w.members.remove(id);
                }
            }
            if let Some((kind, location, distance_km)) = ev {
                let msg = GeoQueryEvent { kind, event_id: id.to_owned(), location, distance_km };
                if !(w.sink)(msg) {
                    closed.push(wid);
                }
            }
        }
        for wid in closed {
            self.watchers.remove(&wid);
        }
    }

    fn candidates(&self, q: &GeoQuery) -> Result<Vec<(&EventId, &GeoEntry)>, GeoError> {
        Ok(match cover_radius(q)? {
            Cover::FullScan => self.entries.iter().map(|(id, (_, e))| (id, e)).collect(),
            Cover::Cells(cells) => {
                let mut out = Vec::new();
                for prefix in &cells {
                    let start = (prefix.clone(), String::new());
                    for (hash, id) in self.by_hash.range(start..) {
                        if !hash.starts_with(prefix.as_str()) {
                            break;
                        }
                        out.push((id, &self.entries[id].1));
                    }
                }
                out
            }
        })
    }

    /// Ids within `radius_km` (inclusive) of the center, nearest first,
    /// ties by id.
    pub fn radius_query(&self, q: &GeoQuery) -> Result<Vec<(EventId, f64)>, GeoError> {
        let mut hits: Vec<(EventId, f64)> =
            self.candidates(q)?.into_iter().filter_map(|(id, e)| q.admits(e).map(|d| (id.clone(), d))).collect();
        sort_hits(&mut hits);
        Ok(hits)
    }

    /// Registers a live query. The sink first receives `entered` for every
    /// current match, then deltas as the index changes.
    pub fn subscribe(&mut self, q: GeoQuery, mut sink: GeoSink) -> Result<Option<WatchId>, GeoError> {
        let hits = self.radius_query(&q)?;
        let mut members = BTreeMap::new();
        for (id, d) in hits {
            let point = self.entries[&id].1.point;
            members.insert(id.clone(), point);
            let ev = GeoQueryEvent { kind: GeoEventKind::Entered, event_id: id, location: point, distance_km: d };
            if !sink(ev) {
                return Ok(None);
            }
        }
        let id = self.next_watch;
        self.next_watch += 1;
        self.watchers.insert(id, Watcher { query: q, members, sink });
        Ok(Some(id))
    }

    pub fn unsubscribe(&mut self, id: WatchId) -> bool {
        self.watchers.remove(&id).is_some()
    }

    pub fn subscriber_count(&self) -> usize {
        self.watchers.len()
    }
}

pub(crate) fn sort_hits(hits: &mut [(EventId, f64)]) {
    hits.sort_by(|a, b| a.1.total_cmp(&b.1).then_with(|| a.0.cmp(&b.0)));
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::sync::{Arc, Mutex};

    fn pt(lat: f64, lon: f64) -> GeoPoint {
        GeoPoint::new(lat, lon).unwrap()
    }

    /// Geohash by integer quantization of each axis, independent of the
    /// bisection loop above.
    fn reference_geohash(lat: f64, lon: f64, precision: usize) -> String {
        let bits = 5 * precision;
        let lon_bits = bits.div_ceil(2);
        let lat_bits = bits / 2;
        let q = |v: f64, lo: f64, span: f64, n: usize| -> u64 {
            let cells = (1u64 << n) as f64;
            (((v - lo) / span * cells).floor() as u64).min((1u64 << n) - 1)
        };
        let (lonq, latq) = (q(lon, -180.0, 360.0, lon_bits), q(lat, -90.0, 180.0, lat_bits));
        let mut acc = 0u64;
        let (mut li, mut ai) = (lon_bits, lat_bits);
        for i in 0..bits {
            acc <<= 1;
            if i % 2 == 0 {
                li -= 1;
                acc |= (lonq >> li) & 1;
            } else {
                ai -= 1;
                acc |= (latq >> ai) & 1;
            }
        }
        (0..precision).rev().map(|c| BASE32[((acc >> (5 * c)) & 31) as usize] as char).collect()
    }

    #[test]
    fn haversine_identity_and_one_degree() {
        let p = pt(12.3, 45.6);
        assert_eq!(haversine_km(p, p), 0.0);
        let d = haversine_km(pt(0.0, 0.0), pt(0.0, 1.0));
        let expected = std::f64::consts::PI * 6371.0 / 180.0;
        assert!((d - 111.195).abs() < 0.001, "{d}");
        assert!((d - expected).abs() < 1e-9);
    }

    #[test]
    fn haversine_is_generic() {
        let d: f32 = haversine(0.0f32, 0.0, 0.0, 1.0, 6371.0);
        assert!((d - 111.195).abs() < 0.01);
    }

    #[test]
    fn haversine_symmetry() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            let a = pt(rng.gen_range(-90.0..=90.0), rng.gen_range(-180.0..180.0));
            let b = pt(rng.gen_range(-90.0..=90.0), rng.gen_range(-180.0..180.0));
            assert_eq!(haversine_km(a, b), haversine_km(b, a));
        }
    }

    #[test]
    fn reference_values() {
        assert_eq!(reference_geohash(0.0, 0.0, 12), "s00000000000");
        assert_eq!(encode_geohash(pt(0.0, 0.0), 12).unwrap().as_str(), "s00000000000");
        assert_eq!(encode_geohash(pt(42.6, -5.6), 5).unwrap().as_str(), "ezs42");
        assert_eq!(reference_geohash(57.64911, 10.40744, 11), "u4pruydqqvj");
        assert_eq!(encode_geohash(pt(57.64911, 10.40744), 11).unwrap().as_str(), "u4pruydqqvj");
    }

    #[test]
    fn agrees_with_reference_on_grid() {
        for i in -17..=17 {
            for j in -35..35 {
                let (lat, lon) = (i as f64 * 5.25 + 0.125, j as f64 * 5.125 + 0.0625);
                assert_eq!(encode_geohash(pt(lat, lon), 9).unwrap().as_str(), reference_geohash(lat, lon, 9));
            }
        }
    }

    #[test]
    fn decode_first_cell() {
        let b = decode_geohash("s").unwrap();
        assert_eq!((b.lat_min, b.lat_max, b.lon_min, b.lon_max), (0.0, 45.0, 0.0, 45.0));
    }

    #[test]
    fn finest_cell_width() {
        let b = encode_geohash(pt(48.1, 11.5), 12).unwrap().bounds();
        assert!(b.width() <= 0.00004);
        assert_eq!(b.width(), 360.0 / 2f64.powi(30));
    }

    #[test]
    fn decode_rejects_bad_input() {
        assert_eq!(decode_geohash("!"), Err(GeoError::InvalidGeohash));
        assert_eq!(decode_geohash("a"), Err(GeoError::InvalidGeohash));
        assert_eq!(decode_geohash(""), Err(GeoError::InvalidGeohash));
        assert!(Geohash::parse("s0i").is_err());
    }

    #[test]
    fn tiny_radius_cover() {
        let q = GeoQuery::new(pt(0.0, 0.0), 0.01).unwrap();
        let Cover::Cells(cells) = cover_radius(&q).unwrap() else { panic!("full scan") };
        assert_eq!(cells.len(), 9);
        // cell height must exceed twice the 0.01 km angular radius
        let dlat = (0.01 / EARTH_RADIUS_KM).to_degrees();
        assert!(cell_size_deg(7).0 > 2.0 * dlat && cell_size_deg(8).0 < 2.0 * dlat);
        assert!(cells.iter().all(|c| c.len() == 7));

        // away from the origin's four-way cell corner the block shares a prefix
        let q = GeoQuery::new(pt(10.01, 20.01), 0.01).unwrap();
        let Cover::Cells(cells) = cover_radius(&q).unwrap() else { panic!("full scan") };
        assert_eq!(cells.len(), 9);
        let first = cells.iter().next().unwrap();
        let common =
            cells.iter().map(|c| c.bytes().zip(first.bytes()).take_while(|(a, b)| a == b).count()).min().unwrap();
        assert!(common >= 5, "{cells:?}");
    }

    #[test]
    fn huge_radius_is_full_scan() {
        let q = GeoQuery::new(pt(0.0, 0.0), 15000.0).unwrap();
        assert_eq!(cover_radius(&q).unwrap(), Cover::FullScan);
        let q = GeoQuery::new(pt(89.99, 0.0), 5.0).unwrap();
        assert_eq!(cover_radius(&q).unwrap(), Cover::FullScan);
    }

    #[test]
    fn cover_contains_disc_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..1000 {
            let center = pt(rng.gen_range(-80.0..80.0), rng.gen_range(-180.0..180.0));
            let r = rng.gen_range(0.01..200.0);
            let q = GeoQuery::new(center, r).unwrap();
            let Cover::Cells(cells) = cover_radius(&q).unwrap() else { continue };
            for _ in 0..20 {
                // random point inside the disc: destination along a random bearing
                let dist = rng.gen_range(0.0..=r) / EARTH_RADIUS_KM;
                let bearing: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
                let (la, lo) = (center.lat.to_radians(), center.lon.to_radians());
                let lat2 = (la.sin() * dist.cos() + la.cos() * dist.sin() * bearing.cos()).asin();
                let lon2 = lo + (bearing.sin() * dist.sin() * la.cos()).atan2(dist.cos() - la.sin() * lat2.sin());
                let p = pt(lat2.to_degrees(), lon2.to_degrees());
                if haversine_km(center, p) > r {
                    continue;
                }
                let code = encode_geohash(p, MAX_PRECISION).unwrap();
                assert!(cells.iter().any(|c| code.as_str().starts_with(c.as_str())), "{p:?} escaped cover of {q:?}");
            }
        }
    }

    #[test]
    fn antimeridian_cover() {
        let q = GeoQuery::new(pt(10.0, 179.99), 5.0).unwrap();
        let mut idx = GeoIndex::new();
        idx.put("west", pt(10.0, -179.99)).unwrap();
        idx.put("east", pt(10.0, 179.98)).unwrap();
        let hits = idx.radius_query(&q).unwrap();
        let ids: Vec<_> = hits.iter().map(|h| h.0.as_str()).collect();
        assert_eq!(ids, ["east", "west"]);
    }

    #[test]
    fn put_remove_query() {
        let mut idx = GeoIndex::new();
        let q = GeoQuery::new(pt(1.0, 1.0), 1.0).unwrap();
        assert!(idx.radius_query(&q).unwrap().is_empty());
        idx.put("e", pt(1.0, 1.0)).unwrap();
        assert_eq!(idx.radius_query(&q).unwrap(), vec![("e".to_string(), 0.0)]);
        idx.put("e", pt(1.0, 1.0)).unwrap();
        assert_eq!(idx.radius_query(&q).unwrap().len(), 1);
        idx.remove("e");
        assert!(idx.radius_query(&q).unwrap().is_empty());
        idx.remove("e");
    }

    #[test]
    fn matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let mut idx = GeoIndex::new();
        let center = pt(45.0, 9.0);
        let mut pts = Vec::new();
        for i in 0..1000 {
            let p = pt(center.lat + rng.gen_range(-0.5..0.5), center.lon + rng.gen_range(-0.5..0.5));
            idx.put(&format!("e{i}"), p).unwrap();
            pts.push((format!("e{i}"), p));
        }
        for _ in 0..100 {
            let c = pt(center.lat + rng.gen_range(-0.5..0.5), center.lon + rng.gen_range(-0.5..0.5));
            let q = GeoQuery::new(c, rng.gen_range(0.1..50.0)).unwrap();
            let mut oracle: Vec<(String, f64)> = pts
                .iter()
                .map(|(id, p)| (id.clone(), haversine_km(c, *p)))
                .filter(|(_, d)| *d <= q.radius_km)
                .collect();
            sort_hits(&mut oracle);
            assert_eq!(idx.radius_query(&q).unwrap(), oracle);
        }
    }

    #[test]
    fn filter_applies() {
        let mut idx = GeoIndex::new();
        let p = pt(0.5, 0.5);
        idx.put_entry("f", GeoEntry { point: p, tags: ["football".to_string()].into(), start_hour: Some(18) }).unwrap();
        idx.put_entry("o", GeoEntry { point: p, tags: ["opera".to_string()].into(), start_hour: Some(20) }).unwrap();
        let q = GeoQuery::new(p, 1.0)
            .unwrap()
            .with_filter(GeoFilter { tags: ["football".to_string()].into(), hour_range: Some((17, 19)) });
        let ids: Vec<_> = idx.radius_query(&q).unwrap().into_iter().map(|h| h.0).collect();
        assert_eq!(ids, ["f"]);
    }

    fn collecting_sink() -> (Arc<Mutex<Vec<GeoQueryEvent>>>, GeoSink) {
        let log = Arc::new(Mutex::new(Vec::new()));
        let l2 = log.clone();
        (
            log,
            Box::new(move |e| {
                l2.lock().unwrap().push(e);
                true
            }),
        )
    }

    #[test]
    fn live_query_deltas() {
        let mut idx = GeoIndex::new();
        let center = pt(50.0, 8.0);
        idx.put("before", center).unwrap();
        let (log, sink) = collecting_sink();
        idx.subscribe(GeoQuery::new(center, 5.0).unwrap(), sink).unwrap();
        idx.put("inside", pt(50.01, 8.0)).unwrap();
        idx.put("inside", pt(50.02, 8.0)).unwrap();
        idx.put("inside", pt(51.0, 8.0)).unwrap();
        idx.put("far", pt(52.0, 8.0)).unwrap();
        idx.remove("before");
        let kinds: Vec<_> = log.lock().unwrap().iter().map(|e| (e.kind, e.event_id.clone())).collect();
        use GeoEventKind::*;
        assert_eq!(
            kinds,
            [
                (Entered, "before".into()),
                (Entered, "inside".into()),
                (Moved, "inside".into()),
                (Exited, "inside".into()),
                (Exited, "before".into()),
            ]
        );
        let exited = &log.lock().unwrap()[3];
        assert_eq!(exited.location, pt(51.0, 8.0));
        assert!(exited.distance_km > 5.0);
    }

    #[test]
    fn closed_sink_unsubscribes() {
        let mut idx = GeoIndex::new();
        let q = GeoQuery::new(pt(0.0, 0.0), 5.0).unwrap();
        idx.subscribe(q, Box::new(|_| false)).unwrap();
        assert_eq!(idx.subscriber_count(), 1);
        idx.put("x", pt(0.0, 0.0)).unwrap();
        assert_eq!(idx.subscriber_count(), 0);
    }

    #[test]
    fn stream_replay_equals_membership() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut idx = GeoIndex::new();
        let center = pt(-33.9, 151.2);
        let q = GeoQuery::new(center, 10.0).unwrap();
        let (log, sink) = collecting_sink();
        idx.subscribe(q.clone(), sink).unwrap();
        for _ in 0..2000 {
            let id = format!("e{}", rng.gen_range(0..60));
            if rng.gen_bool(0.2) {
                idx.remove(&id);
            } else {
                let p = pt(center.lat + rng.gen_range(-0.2..0.2), center.lon + rng.gen_range(-0.2..0.2));
                idx.put(&id, p).unwrap();
            }
        }
        let mut replay = BTreeSet::new();
        for e in log.lock().unwrap().iter() {
            match e.kind {
                GeoEventKind::Entered => assert!(replay.insert(e.event_id.clone())),
                GeoEventKind::Moved => assert!(replay.contains(&e.event_id)),
                GeoEventKind::Exited => assert!(replay.remove(&e.event_id)),
            }
        }
        let truth: BTreeSet<_> =
            idx.points().into_iter().filter(|(_, p)| haversine_km(center, *p) <= 10.0).map(|(id, _)| id).collect();
        assert_eq!(replay, truth);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn round_trip_and_prefix(lat in -90.0f64..=90.0, lon in -180.0f64..180.0, p in 1usize..12) {
                let point = GeoPoint { lat, lon };
                let code = encode_geohash(point, p).unwrap();
                prop_assert!(code.bounds().contains(point));
                let finer = encode_geohash(point, p + 1).unwrap();
                prop_assert!(finer.as_str().starts_with(code.as_str()));
                let center = code.bounds().center();
                prop_assert_eq!(encode_geohash(center, p).unwrap(), code);
            }
        }
    }
}
