//! Sparse user × service QoS observations.
//!
//! Values are stored in canonical orientation: larger is better. Datasets
//! whose metric is smaller-is-better (response time, failure probability)
//! are negated once at ingestion and negated back when written out.

use std::fmt;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

pub const CSV_HEADER: [&str; 3] = ["user_id", "service_id", "qos_value"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct UserId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ServiceId(pub usize);

impl fmt::Display for UserId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Display for ServiceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MetricOrientation {
    #[default]
    LargerIsBetter,
    SmallerIsBetter,
}

impl MetricOrientation {
    /// Maps a source value to canonical (larger-is-better) orientation.
    pub fn canonicalize(self, value: f64) -> f64 {
        match self {
            MetricOrientation::LargerIsBetter => value,
            MetricOrientation::SmallerIsBetter => -value,
        }
    }

    /// Inverse of [`canonicalize`](Self::canonicalize).
    pub fn to_source(self, value: f64) -> f64 {
        self.canonicalize(value)
    }
}

impl FromStr for MetricOrientation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "larger-is-better" => Ok(MetricOrientation::LargerIsBetter),
            "smaller-is-better" => Ok(MetricOrientation::SmallerIsBetter),
            other => Err(Error::Config(format!("unknown orientation `{other}`"))),
        }
    }
}

/// Immutable sparse QoS matrix in canonical orientation.
#[derive(Debug, Clone, PartialEq)]
pub struct QoSMatrix {
    num_users: usize,
    num_services: usize,
    cells: Vec<Option<f64>>,
    rows: Vec<Vec<(ServiceId, f64)>>,
}

impl QoSMatrix {
    /// Builds a matrix from canonical-orientation entries.
    pub fn from_entries<I>(num_users: usize, num_services: usize, entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (UserId, ServiceId, f64)>,
    {
        let mut builder = MatrixBuilder::new(num_users, num_services);
        for (u, s, q) in entries {
            builder.insert(u, s, q, 0)?;
        }
        Ok(builder.finish())
    }

    /// Builds a fully observed matrix from dense rows.
    pub fn from_dense(rows: &[Vec<f64>]) -> Result<Self> {
        let num_services = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != num_services) {
            return Err(Error::domain("dense rows have unequal lengths"));
        }
        Self::from_entries(
            rows.len(),
            num_services,
            rows.iter().enumerate().flat_map(|(u, r)| {
                r.iter()
                    .enumerate()
                    .map(move |(s, &q)| (UserId(u), ServiceId(s), q))
            }),
        )
    }

    pub fn num_users(&self) -> usize {
        self.num_users
    }

    pub fn num_services(&self) -> usize {
        self.num_services
    }

    pub fn num_entries(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    pub fn users(&self) -> impl Iterator<Item = UserId> {
        (0..self.num_users).map(UserId)
    }

    pub fn services(&self) -> impl Iterator<Item = ServiceId> {
        (0..self.num_services).map(ServiceId)
    }

    pub fn contains_user(&self, u: UserId) -> bool {
        u.0 < self.num_users
    }

    pub fn check_user(&self, u: UserId) -> Result<()> {
        if self.contains_user(u) {
            Ok(())
        } else {
            Err(Error::UnknownUser(u))
        }
    }

    pub fn check_service(&self, s: ServiceId) -> Result<()> {
        if s.0 < self.num_services {
            Ok(())
        } else {
            Err(Error::UnknownService(s))
        }
    }

    /// Canonical value of `(u, s)`, `None` when unobserved or out of range.
    #[inline]
    pub fn get(&self, u: UserId, s: ServiceId) -> Option<f64> {
        if u.0 >= self.num_users || s.0 >= self.num_services {
            return None;
        }
        self.cells[u.0 * self.num_services + s.0]
    }

    /// Observed `(service, value)` pairs for `u`, ascending by service.
    pub fn row(&self, u: UserId) -> Result<&[(ServiceId, f64)]> {
        self.check_user(u)?;
        Ok(&self.rows[u.0])
    }

    /// Services observed by `u`, ascending.
    pub fn observed_set(&self, u: UserId) -> Result<Vec<ServiceId>> {
        Ok(self.row(u)?.iter().map(|&(s, _)| s).collect())
    }

    pub fn entries(&self) -> impl Iterator<Item = (UserId, ServiceId, f64)> + '_ {
        self.rows
            .iter()
            .enumerate()
            .flat_map(|(u, row)| row.iter().map(move |&(s, q)| (UserId(u), s, q)))
    }
}

struct MatrixBuilder {
    num_users: usize,
    num_services: usize,
    cells: Vec<Option<f64>>,
}

impl MatrixBuilder {
    fn new(num_users: usize, num_services: usize) -> Self {
        MatrixBuilder {
            num_users,
            num_services,
            cells: vec![None; num_users * num_services],
        }
    }

    fn insert(&mut self, u: UserId, s: ServiceId, q: f64, line: u64) -> Result<()> {
        if u.0 >= self.num_users {
            return Err(Error::UnknownUser(u));
        }
        if s.0 >= self.num_services {
            return Err(Error::UnknownService(s));
        }
        if !q.is_finite() {
            return Err(Error::NonFiniteValue { line, value: q });
        }
        let cell = &mut self.cells[u.0 * self.num_services + s.0];
        if cell.is_some() {
            return Err(Error::DuplicateKey {
                line,
                user: u,
                service: s,
            });
        }
        *cell = Some(q);
        Ok(())
    }

    fn finish(self) -> QoSMatrix {
        let rows = self
            .cells
            .chunks(self.num_services.max(1))
            .take(self.num_users)
            .map(|chunk| {
                chunk
                    .iter()
                    .enumerate()
                    .filter_map(|(s, q)| q.map(|q| (ServiceId(s), q)))
                    .collect()
            })
            .collect::<Vec<Vec<_>>>();
        let rows = if self.num_services == 0 {
            vec![Vec::new(); self.num_users]
        } else {
            rows
        };
        QoSMatrix {
            num_users: self.num_users,
            num_services: self.num_services,
            cells: self.cells,
            rows,
        }
    }
}

/// Loads a `user_id,service_id,qos_value` CSV file.
pub fn load_matrix(path: &Path, orientation: MetricOrientation) -> Result<QoSMatrix> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_matrix(file, orientation)
}

pub fn read_matrix<R: Read>(reader: R, orientation: MetricOrientation) -> Result<QoSMatrix> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .comment(Some(b'#'))
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);

    let header = rdr.headers()?.clone();
    if header.iter().collect::<Vec<_>>() != CSV_HEADER {
        return Err(Error::Parse {
            line: 1,
            message: format!("expected header `{}`", CSV_HEADER.join(",")),
        });
    }

    let mut raw = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            Error::Parse {
                line,
                message: e.to_string(),
            }
        })?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != 3 {
            return Err(Error::Parse {
                line,
                message: format!("expected 3 fields, found {}", record.len()),
            });
        }
        let field = |i: usize| record.get(i).unwrap_or_default();
        let user: usize = field(0).parse().map_err(|_| Error::Parse {
            line,
            message: format!("invalid user id `{}`", field(0)),
        })?;
        let service: usize = field(1).parse().map_err(|_| Error::Parse {
            line,
            message: format!("invalid service id `{}`", field(1)),
        })?;
        let value: f64 = field(2).parse().map_err(|_| Error::Parse {
            line,
            message: format!("invalid QoS value `{}`", field(2)),
        })?;
        raw.push((line, UserId(user), ServiceId(service), value));
    }

    let num_users = raw.iter().map(|r| r.1 .0 + 1).max().unwrap_or(0);
    let num_services = raw.iter().map(|r| r.2 .0 + 1).max().unwrap_or(0);
    let mut builder = MatrixBuilder::new(num_users, num_services);
    for (line, u, s, q) in raw {
        builder.insert(u, s, orientation.canonicalize(q), line)?;
    }
    Ok(builder.finish())
}

/// Writes the matrix in source orientation, rows ordered by (user, service).
pub fn write_matrix<W: Write>(
    m: &QoSMatrix,
    writer: W,
    orientation: MetricOrientation,
) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(CSV_HEADER)?;
    for (u, s, q) in m.entries() {
        wtr.write_record([
            u.0.to_string(),
            s.0.to_string(),
            orientation.to_source(q).to_string(),
        ])?;
    }
    wtr.flush().map_err(|e| Error::io("<csv writer>", e))?;
    Ok(())
}

pub fn save_matrix(m: &QoSMatrix, path: &Path, orientation: MetricOrientation) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_matrix(m, file, orientation)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub density: f64,
    pub seed: u64,
    pub active_users: Vec<UserId>,
}

#[derive(Debug, Clone)]
pub struct Split {
    pub train: QoSMatrix,
    pub truth: QoSMatrix,
    /// Active users with no observations; left out of both halves' active rows.
    pub skipped: Vec<UserId>,
}

/// `ceil(density * n)`, treating products within 1e-9 of an integer as
/// that integer so that e.g. `0.3 * 10` keeps 3 entries.
pub fn retained_count(density: f64, n: usize) -> usize {
    let x = density * n as f64;
    let nearest = x.round();
    let kept = if (x - nearest).abs() < 1e-9 {
        nearest
    } else {
        x.ceil()
    };
    (kept as usize).min(n)
}

/// Hides part of each active user's row.
///
/// Each active user keeps `retained_count(density, |row|)` entries chosen by
/// a Fisher-Yates shuffle seeded from `derive_seed(spec.seed, [user])`; the
/// rest move to `truth`. Other users are copied to `train` unchanged.
pub fn split_train_test(m: &QoSMatrix, spec: &SplitSpec) -> Result<Split> {
    if !(spec.density > 0.0 && spec.density <= 1.0) {
        return Err(Error::domain(format!(
            "density {} outside (0, 1]",
            spec.density
        )));
    }
    let mut active = spec.active_users.clone();
    active.sort();
    active.dedup();
    for &u in &active {
        m.check_user(u)?;
    }

    let mut is_active = vec![false; m.num_users()];
    for &u in &active {
        is_active[u.0] = true;
    }

    let mut train = MatrixBuilder::new(m.num_users(), m.num_services());
    let mut truth = MatrixBuilder::new(m.num_users(), m.num_services());
    let mut skipped = Vec::new();

    for u in m.users() {
        let row = &m.rows[u.0];
        if !is_active[u.0] {
            for &(s, q) in row {
                train.insert(u, s, q, 0)?;
            }
            continue;
        }
        if row.is_empty() {
            log::warn!("active user {u} has no observations; skipped");
            skipped.push(u);
            continue;
        }
        let keep = retained_count(spec.density, row.len());
        let mut order: Vec<usize> = (0..row.len()).collect();
        let mut r = rng::seeded(rng::derive_seed(spec.seed, &[u.0 as u64]));
        rng::shuffle(&mut r, &mut order);
        for (rank, &idx) in order.iter().enumerate() {
            let (s, q) = row[idx];
            if rank < keep {
                train.insert(u, s, q, 0)?;
            } else {
                truth.insert(u, s, q, 0)?;
            }
        }
    }

    Ok(Split {
        train: train.finish(),
        truth: truth.finish(),
        skipped,
    })
}
