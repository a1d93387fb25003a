//! Representative-day selection: standardized PCA followed by k-means, with
//! cluster medoids as the representative profiles.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::system::DailyProfile;

const MAX_LLOYD_ITERS: usize = 300;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("k must be at least 1")]
    ZeroK,
    #[error("variance target {0} not in (0, 1]")]
    BadVarianceTarget(f64),
    #[error("k = {k} exceeds the {distinct} distinct days available")]
    TooFewDays { k: usize, distinct: usize },
    #[error("days have inconsistent shapes")]
    Shape,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RepresentativeDay {
    pub profile: DailyProfile,
    pub probability: f64,
    /// Source-day index of the medoid.
    pub source_day: usize,
    pub member_days: Vec<usize>,
}

impl RepresentativeDay {
    /// A single day standing for the whole year.
    pub fn whole(profile: DailyProfile) -> Self {
        Self {
            profile,
            probability: 1.0,
            source_day: 0,
            member_days: vec![0],
        }
    }
}

#[derive(Clone, Debug)]
pub struct Reduction {
    pub days: Vec<RepresentativeDay>,
    /// Retained principal components.
    pub components: usize,
    /// Cumulative explained-variance ratio for 1, 2, ... components.
    pub cumulative_variance: Vec<f64>,
    /// Cluster of each source day.
    pub assignment: Vec<usize>,
    /// Within-cluster sum of squares after each Lloyd iteration.
    pub wcss_trace: Vec<f64>,
    /// Fraction of total variance not captured by the retained components,
    /// measured directly from reconstruction residuals.
    pub residual_variance: f64,
}

/// One row per day: every bus's load then every bus's renewables, 24 values each.
pub fn day_vectors(profiles: &[DailyProfile]) -> Result<DMatrix<f64>, ScenarioError> {
    let first = profiles.first().ok_or(ScenarioError::Shape)?;
    let nb = first.load.len();
    let t = first.hours();
    let dim = 2 * nb * t;
    let mut x = DMatrix::zeros(profiles.len(), dim);
    for (d, p) in profiles.iter().enumerate() {
        if p.load.len() != nb || p.ren.len() != nb || p.hours() != t {
            return Err(ScenarioError::Shape);
        }
        for (k, series) in p.load.iter().chain(&p.ren).enumerate() {
            if series.len() != t {
                return Err(ScenarioError::Shape);
            }
            for (h, &v) in series.iter().enumerate() {
                x[(d, k * t + h)] = v;
            }
        }
    }
    Ok(x)
}

/// Standardizes each bus series (all its hours pooled) to zero mean and unit
/// variance, then centers every column.
fn standardize(x: &mut DMatrix<f64>, series_len: usize) {
    let (n, dim) = x.shape();
    for s in 0..dim / series_len {
        let cols = s * series_len..(s + 1) * series_len;
        let count = (n * series_len) as f64;
        let mean = cols.clone().map(|c| x.column(c).sum()).sum::<f64>() / count;
        let var = cols
            .clone()
            .map(|c| x.column(c).iter().map(|v| (v - mean).powi(2)).sum::<f64>())
            .sum::<f64>()
            / count;
        let sd = var.sqrt();
        for c in cols {
            for r in 0..n {
                x[(r, c)] = if sd > 0.0 {
                    (x[(r, c)] - mean) / sd
                } else {
                    0.0
                };
            }
        }
    }
    for c in 0..dim {
        let m = x.column(c).mean();
        for r in 0..n {
            x[(r, c)] -= m;
        }
    }
}

pub struct Pca {
    /// Eigenvalues in descending order.
    pub eigenvalues: Vec<f64>,
    /// Matching unit eigenvectors as columns.
    pub basis: DMatrix<f64>,
}

impl Pca {
    pub fn fit(centered: &DMatrix<f64>) -> Self {
        let cov = centered.transpose() * centered;
        let eig = SymmetricEigen::new(cov);
        let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
        order.sort_by(|&a, &b| {
            eig.eigenvalues[b]
                .total_cmp(&eig.eigenvalues[a])
                .then(a.cmp(&b))
        });
        let eigenvalues = order.iter().map(|&i| eig.eigenvalues[i].max(0.0)).collect();
        let basis = DMatrix::from_fn(eig.eigenvectors.nrows(), order.len(), |r, c| {
            eig.eigenvectors[(r, order[c])]
        });
        Self { eigenvalues, basis }
    }

    pub fn cumulative(&self) -> Vec<f64> {
        let total: f64 = self.eigenvalues.iter().sum();
        let mut acc = 0.0;
        self.eigenvalues
            .iter()
            .map(|v| {
                acc += v;
                if total > 0.0 {
                    acc / total
                } else {
                    1.0
                }
            })
            .collect()
    }

    /// Smallest component count whose cumulative ratio reaches `target`.
    pub fn components_for(&self, target: f64) -> usize {
        let cum = self.cumulative();
        cum.iter()
            .position(|&c| c >= target)
            .map_or(cum.len(), |i| i + 1)
            .max(1)
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

struct KMeans {
    assignment: Vec<usize>,
    wcss_trace: Vec<f64>,
}

fn kmeans(points: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> KMeans {
    let n = points.len();
    let dim = points[0].len();
    // k-means++ seeding.
    let mut centers: Vec<Vec<f64>> = vec![points[rng.gen_range(0..n)].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut r = rng.gen::<f64>() * total;
            let mut idx = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                if r < w {
                    idx = i;
                    break;
                }
                r -= w;
            }
            idx
        } else {
            rng.gen_range(0..n)
        };
        centers.push(points[pick].clone());
        for (i, p) in points.iter().enumerate() {
            d2[i] = d2[i].min(sq_dist(p, &centers[centers.len() - 1]));
        }
    }

    let nearest = |centers: &[Vec<f64>], p: &[f64]| -> (usize, f64) {
        let mut best = (0, f64::INFINITY);
        for (c, ctr) in centers.iter().enumerate() {
            let d = sq_dist(p, ctr);
            if d < best.1 {
                best = (c, d);
            }
        }
        best
    };

    let mut assignment = vec![usize::MAX; n];
    let mut wcss_trace = Vec::new();
    for _ in 0..MAX_LLOYD_ITERS {
        let mut changed = false;
        for (i, p) in points.iter().enumerate() {
            let (c, _) = nearest(&centers, p);
            if assignment[i] != c {
                assignment[i] = c;
                changed = true;
            }
        }
        // An emptied cluster takes the point farthest from its center.
        for c in 0..k {
            if !assignment.contains(&c) {
                let far = (0..n)
                    .max_by(|&a, &b| {
                        let da = sq_dist(&points[a], &centers[assignment[a]]);
                        let db = sq_dist(&points[b], &centers[assignment[b]]);
                        da.total_cmp(&db).then(b.cmp(&a))
                    })
                    .expect("nonempty");
                assignment[far] = c;
                changed = true;
            }
        }
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (i, p) in points.iter().enumerate() {
            counts[assignment[i]] += 1;
            for (s, v) in sums[assignment[i]].iter_mut().zip(p) {
                *s += v;
            }
        }
        for c in 0..k {
            for j in 0..dim {
                centers[c][j] = sums[c][j] / counts[c] as f64;
            }
        }
        let after: f64 = points
            .iter()
            .enumerate()
            .map(|(i, p)| sq_dist(p, &centers[assignment[i]]))
            .sum();
        wcss_trace.push(after);
        if !changed {
            break;
        }
    }
    KMeans {
        assignment,
        wcss_trace,
    }
}

fn distinct_days(x: &DMatrix<f64>) -> usize {
    let rows: Vec<Vec<u64>> = x
        .row_iter()
        .map(|r| r.iter().map(|v| v.to_bits()).collect())
        .collect();
    let mut sorted = rows.clone();
    sorted.sort();
    sorted.dedup();
    sorted.len()
}

pub fn reduce_days(
    profiles: &[DailyProfile],
    k: usize,
    variance_target: f64,
    seed: u64,
) -> Result<Reduction, ScenarioError> {
    if k == 0 {
        return Err(ScenarioError::ZeroK);
    }
    if !(variance_target > 0.0 && variance_target <= 1.0) {
        return Err(ScenarioError::BadVarianceTarget(variance_target));
    }
    let raw = day_vectors(profiles)?;
    let distinct = distinct_days(&raw);
    if k > distinct {
        return Err(ScenarioError::TooFewDays { k, distinct });
    }
    let t = profiles[0].hours();
    let mut x = raw;
    standardize(&mut x, t);
    let pca = Pca::fit(&x);
    let cumulative_variance = pca.cumulative();
    let m = pca.components_for(variance_target);
    let basis = pca.basis.columns(0, m).into_owned();
    let scores = &x * &basis;
    let residual = &x - &scores * basis.transpose();
    let total = x.norm_squared();
    let residual_variance = if total > 0.0 {
        residual.norm_squared() / total
    } else {
        0.0
    };

    let points: Vec<Vec<f64>> = scores
        .row_iter()
        .map(|r| r.iter().copied().collect())
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let km = kmeans(&points, k, &mut rng);

    let n = profiles.len();
    let mut clusters: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (i, &c) in km.assignment.iter().enumerate() {
        clusters[c].push(i);
    }
    let mut days = Vec::with_capacity(k);
    for members in &clusters {
        let medoid = *members
            .iter()
            .min_by(|&&a, &&b| {
                let ca: f64 = members
                    .iter()
                    .map(|&o| sq_dist(&points[a], &points[o]).sqrt())
                    .sum();
                let cb: f64 = members
                    .iter()
                    .map(|&o| sq_dist(&points[b], &points[o]).sqrt())
                    .sum();
                ca.total_cmp(&cb).then(a.cmp(&b))
            })
            .expect("clusters are nonempty");
        days.push(RepresentativeDay {
            profile: representative_profile(&profiles[medoid]),
            probability: members.len() as f64 / n as f64,
            source_day: medoid,
            member_days: members.clone(),
        });
    }
    days.sort_by_key(|d| d.source_day);
    normalize_probabilities(&mut days);
    Ok(Reduction {
        days,
        components: m,
        cumulative_variance,
        assignment: km.assignment,
        wcss_trace: km.wcss_trace,
        residual_variance,
    })
}

/// Forces the probabilities to sum to exactly one when added left to right.
/// The last weight becomes `1 − (sum of the others)`; adding that back to the
/// partial sum rounds to exactly one for any partial sum in [0, 1].
pub fn normalize_probabilities(days: &mut [RepresentativeDay]) {
    let Some((last, rest)) = days.split_last_mut() else {
        return;
    };
    let partial: f64 = rest.iter().map(|d| d.probability).sum();
    last.probability = 1.0 - partial;
}

fn net_load(day: &DailyProfile) -> Vec<f64> {
    (0..day.hours()).map(|t| day.net_load(t)).collect()
}

/// Largest absolute hour-to-hour net-load change within the day (wraparound excluded).
pub fn max_interior_step(day: &DailyProfile) -> f64 {
    net_load(day)
        .windows(2)
        .map(|w| (w[1] - w[0]).abs())
        .fold(0.0, f64::max)
}

/// Brings the midnight net-load jump (last hour to first hour) within the
/// largest step seen inside the day. The first and last hours' loads are
/// blended toward each other, which preserves each bus's daily energy; if
/// blending alone cannot close the gap, the remainder is moved between the two
/// hours as an energy-neutral transfer.
pub fn smooth_boundaries(day: &DailyProfile) -> DailyProfile {
    let t = day.hours();
    let mut out = day.clone();
    if t < 2 {
        return out;
    }
    let limit = max_interior_step(day);
    let net = net_load(day);
    let gap = net[t - 1] - net[0];
    if gap.abs() <= limit {
        return out;
    }
    let target = gap.signum() * limit;
    let first: f64 = day.load.iter().map(|l| l[0]).sum();
    let last: f64 = day.load.iter().map(|l| l[t - 1]).sum();
    let dl = last - first;
    let mut w = 0.0;
    if dl != 0.0 {
        w = ((gap - target) / (2.0 * dl)).clamp(0.0, 0.5);
    }
    for (b, series) in out.load.iter_mut().enumerate() {
        let (a, z) = (day.load[b][0], day.load[b][t - 1]);
        series[0] = (1.0 - w) * a + w * z;
        series[t - 1] = (1.0 - w) * z + w * a;
    }
    let new_gap = out.net_load(t - 1) - out.net_load(0);
    let rest = (new_gap - target) / 2.0;
    if rest.abs() > 0.0 && (rest > 0.0) == (gap > 0.0) {
        // Positive gap: lift the first hour and lower the last hour by `rest`.
        let (from, to) = if rest > 0.0 { (t - 1, 0) } else { (0, t - 1) };
        let need = rest.abs();
        let avail: f64 = out.load.iter().map(|l| l[from]).sum();
        let moved = need.min(avail);
        if avail > 0.0 {
            for series in out.load.iter_mut() {
                let share = moved * series[from] / avail;
                series[from] -= share;
                series[to] += share;
            }
        }
    }
    out
}

/// A source day as used in planning: negatives clipped to zero, then the
/// midnight net-load ramp smoothed.
pub fn representative_profile(day: &DailyProfile) -> DailyProfile {
    let mut p = day.clone();
    for v in p.load.iter_mut().chain(p.ren.iter_mut()).flatten() {
        *v = v.max(0.0);
    }
    smooth_boundaries(&p)
}

/// `day_index,probability,member_days` with members separated by semicolons.
pub fn repdays_csv(days: &[RepresentativeDay]) -> String {
    let mut s = String::from("day_index,probability,member_days\n");
    for d in days {
        let members: Vec<String> = d.member_days.iter().map(usize::to_string).collect();
        s.push_str(&format!(
            "{},{},{}\n",
            d.source_day,
            d.probability,
            members.join(";")
        ));
    }
    s
}

/// Rebuilds representative days from a `repdays.csv` and the full profile set.
/// Lines starting with `#` are comments.
pub fn parse_repdays(
    text: &str,
    profiles: &[DailyProfile],
) -> Result<Vec<RepresentativeDay>, String> {
    let mut out = Vec::new();
    let rows = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.starts_with('#'));
    for (i, line) in rows.skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.splitn(3, ',').collect();
        if cells.len() != 3 {
            return Err(format!("repdays line {}: expected 3 fields", i + 1));
        }
        let day: usize = cells[0]
            .trim()
            .parse()
            .map_err(|_| format!("repdays line {}: bad day index", i + 1))?;
        let prob: f64 = cells[1]
            .trim()
            .parse()
            .map_err(|_| format!("repdays line {}: bad probability", i + 1))?;
        let members = cells[2]
            .split(';')
            .filter(|s| !s.trim().is_empty())
            .map(|s| s.trim().parse::<usize>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|_| format!("repdays line {}: bad member list", i + 1))?;
        let source = profiles
            .get(day)
            .ok_or_else(|| format!("repdays line {}: day {day} out of range", i + 1))?;
        out.push(RepresentativeDay {
            profile: representative_profile(source),
            probability: prob,
            source_day: day,
            member_days: members,
        });
    }
    Ok(out)
}
