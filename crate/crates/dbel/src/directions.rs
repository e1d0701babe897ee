//! Candidate projection directions.
//!
//! The maximum of the statistic over all of R^p is attained on a finite set
//! of directions built from pairwise coordinate-difference ratios of the
//! observations: slopes `(a1 - b1)/(b2 - a2)` over pooled rows at p = 2, and
//! recursively nested ratio families for general p. Enumerating that set
//! makes the test exactly computable; when the enumeration is too large a
//! seeded multi-start local search stands in, flagged `exact = false`.

use crate::elr::{DbelParams, ElrKernel};
use crate::error::{Error, Result};
use crate::rng::indexed_rng;
use crate::samples::MultivariateSample;
use crate::scalar::Real;

/// A projection vector u reducing p-variate rows to scalars.
#[derive(Debug, Clone, PartialEq)]
pub struct Direction<F> {
    coords: Vec<F>,
}

impl<F: Real> Direction<F> {
    pub fn new(coords: Vec<F>) -> Result<Self> {
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidDirection("non-finite coordinate".into()));
        }
        if coords.iter().all(|c| *c == F::zero()) {
            return Err(Error::InvalidDirection(
                "at least one coordinate must be nonzero".into(),
            ));
        }
        Ok(Self { coords })
    }

    pub fn axis(p: usize, index: usize) -> Self {
        let mut coords = vec![F::zero(); p];
        coords[index] = F::one();
        Self { coords }
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn coords(&self) -> &[F] {
        &self.coords
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Construction {
    P2Exact,
    RecursiveExact,
    MultistartApprox,
}

/// A finite, canonically ordered, deduplicated set of candidate directions.
#[derive(Debug, Clone)]
pub struct CandidateSet<F> {
    pub directions: Vec<Direction<F>>,
    pub construction: Construction,
    pub exact: bool,
    /// Per direction, the pooled observation pairs (x rows 0..n, y rows
    /// n..n+m) whose projections tie there by construction. Evaluation
    /// forces these ties and maximizes over their resolutions.
    pub(crate) tie_pairs: Vec<Vec<(usize, usize)>>,
}

impl<F: Real> CandidateSet<F> {
    pub fn len(&self) -> usize {
        self.directions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.directions.is_empty()
    }

    pub(crate) fn ties_of(&self, idx: usize) -> &[(usize, usize)] {
        self.tie_pairs.get(idx).map(Vec::as_slice).unwrap_or(&[])
    }

    fn from_plain_directions(dirs: Vec<Direction<F>>, construction: Construction, exact: bool) -> Self {
        let tie_pairs = vec![Vec::new(); dirs.len()];
        Self {
            directions: dirs,
            construction,
            exact,
            tie_pairs,
        }
    }
}

/// -0.0 normalizes to +0.0 so bitwise dedup does not keep numerically equal
/// twins.
#[inline]
fn clean<F: Real>(v: F) -> F {
    if v == F::zero() {
        F::zero()
    } else {
        v
    }
}

fn lex_cmp<F: Real>(a: &[F], b: &[F]) -> std::cmp::Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.partial_cmp(y).expect("candidate coordinates are finite") {
            std::cmp::Ordering::Equal => continue,
            other => return other,
        }
    }
    a.len().cmp(&b.len())
}

fn canonicalize<F: Real>(mut dirs: Vec<Direction<F>>) -> Vec<Direction<F>> {
    dirs.sort_by(|a, b| lex_cmp(a.coords(), b.coords()));
    dirs.dedup_by(|a, b| a.coords() == b.coords());
    dirs
}

/// Exact candidate set for bivariate samples: one slope per unordered pair
/// of pooled rows, plus both axes. Each slope direction remembers the
/// pooled pairs that generate it, the projections it ties by construction.
pub fn candidates_p2<F: Real>(
    x: &MultivariateSample<F>,
    y: &MultivariateSample<F>,
) -> Result<CandidateSet<F>> {
    if x.dim() != 2 || y.dim() != 2 {
        return Err(Error::DimMismatch {
            expected: 2,
            found: x.dim().max(y.dim()),
        });
    }
    let pooled: Vec<&[F]> = x.iter_rows().chain(y.iter_rows()).collect();
    let t = pooled.len();
    let mut slopes: Vec<(F, (usize, usize))> = Vec::with_capacity(t * (t - 1) / 2);
    for i in 0..t {
        for j in i + 1..t {
            let denom = pooled[j][1] - pooled[i][1];
            let s = (pooled[i][0] - pooled[j][0]) / denom;
            if s.is_finite() {
                slopes.push((clean(s), (i, j)));
            }
        }
    }
    slopes.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());

    // directions in lexicographic order: the second axis first, then the
    // slope forms ascending (the first axis is the slope-zero form)
    let mut directions: Vec<Direction<F>> = vec![Direction::axis(2, 1)];
    let mut tie_pairs: Vec<Vec<(usize, usize)>> = vec![Vec::new()];
    let mut axis0_done = false;
    let mut idx = 0;
    while idx < slopes.len() {
        let s = slopes[idx].0;
        let mut pairs = Vec::new();
        while idx < slopes.len() && slopes[idx].0 == s {
            pairs.push(slopes[idx].1);
            idx += 1;
        }
        if s >= F::zero() && !axis0_done {
            if s == F::zero() {
                axis0_done = true; // merge the axis into the zero slope
            } else {
                directions.push(Direction::axis(2, 0));
                tie_pairs.push(Vec::new());
                axis0_done = true;
            }
        }
        directions.push(Direction {
            coords: vec![F::one(), s],
        });
        tie_pairs.push(pairs);
    }
    if !axis0_done {
        directions.push(Direction::axis(2, 0));
        tie_pairs.push(Vec::new());
    }
    Ok(CandidateSet {
        directions,
        construction: Construction::P2Exact,
        exact: true,
        tie_pairs,
    })
}

/// Per-family ratio tables. Level-1 entries are the coordinate-difference
/// ratio vectors over index pairs (cross-arm, within-X, within-Y); each next
/// level takes ratios of differences of distinct previous-level entries,
/// dropping the last component.
struct RatioLevels<F> {
    /// levels[l][family] is the list of coefficient vectors at level l+1
    levels: Vec<[Vec<Vec<F>>; 3]>,
}

fn level1_families<F: Real>(
    x: &MultivariateSample<F>,
    y: &MultivariateSample<F>,
) -> [Vec<Vec<F>>; 3] {
    let p = x.dim();
    let ratio_vec = |a: &[F], b: &[F]| -> Option<Vec<F>> {
        let denom = b[p - 1] - a[p - 1];
        let v: Vec<F> = (0..p - 1).map(|k| clean((a[k] - b[k]) / denom)).collect();
        v.iter().all(|c| c.is_finite()).then_some(v)
    };
    let mut w = Vec::new();
    for xi in x.iter_rows() {
        for yj in y.iter_rows() {
            if let Some(v) = ratio_vec(xi, yj) {
                w.push(v);
            }
        }
    }
    let mut u = Vec::new();
    for i in 0..x.rows() {
        for r in i + 1..x.rows() {
            if let Some(v) = ratio_vec(x.row(i), x.row(r)) {
                u.push(v);
            }
        }
    }
    let mut v_fam = Vec::new();
    for j in 0..y.rows() {
        for s in j + 1..y.rows() {
            if let Some(v) = ratio_vec(y.row(j), y.row(s)) {
                v_fam.push(v);
            }
        }
    }
    [w, u, v_fam]
}

fn dedup_vectors<F: Real>(mut vecs: Vec<Vec<F>>) -> Vec<Vec<F>> {
    vecs.sort_by(|a, b| lex_cmp(a, b));
    vecs.dedup();
    vecs
}

fn next_level<F: Real>(prev: &[Vec<F>]) -> Vec<Vec<F>> {
    let mut out = Vec::new();
    if prev.is_empty() {
        return out;
    }
    let len = prev[0].len();
    debug_assert!(len >= 2);
    for i in 0..prev.len() {
        for j in i + 1..prev.len() {
            let (a, b) = (&prev[i], &prev[j]);
            let denom = b[len - 1] - a[len - 1];
            let v: Vec<F> = (0..len - 1).map(|k| clean((a[k] - b[k]) / denom)).collect();
            if v.iter().all(|c| c.is_finite()) {
                out.push(v);
            }
        }
    }
    dedup_vectors(out)
}

impl<F: Real> RatioLevels<F> {
    /// Builds levels 1..=max_level (vectors shrink by one component per
    /// level, so max_level <= p-1).
    fn build(x: &MultivariateSample<F>, y: &MultivariateSample<F>, max_level: usize) -> Self {
        let mut levels = Vec::with_capacity(max_level);
        let l1 = level1_families(x, y);
        levels.push([
            dedup_vectors(l1[0].clone()),
            dedup_vectors(l1[1].clone()),
            dedup_vectors(l1[2].clone()),
        ]);
        for _ in 2..=max_level {
            let prev = levels.last().unwrap();
            levels.push([
                next_level(&prev[0]),
                next_level(&prev[1]),
                next_level(&prev[2]),
            ]);
        }
        Self { levels }
    }

    fn at(&self, level: usize) -> &[Vec<Vec<F>>; 3] {
        &self.levels[level - 1]
    }
}

fn pairs(c: u128) -> u128 {
    c.saturating_mul(c.saturating_sub(1)) / 2
}

/// Upper bound on the number of directions the recursive enumeration emits,
/// from the analytic per-level pair counts (before value dedup).
pub fn projected_recursive_count(n: usize, m: usize, p: usize) -> u128 {
    let mut w = (n as u128).saturating_mul(m as u128);
    let mut u = pairs(n as u128);
    let mut v = pairs(m as u128);
    let mut level_totals: Vec<u128> = vec![w.saturating_add(u).saturating_add(v)];
    for _ in 2..p {
        w = pairs(w);
        u = pairs(u);
        v = pairs(v);
        level_totals.push(w.saturating_add(u).saturating_add(v));
    }
    let mut total: u128 = 1 + p as u128; // the last axis set plus explicit axes
    for s in 1..p {
        let mut prod: u128 = 1;
        for level in 1..=(p - s) {
            prod = prod.saturating_mul(level_totals[level - 1]);
        }
        total = total.saturating_add(prod);
    }
    total
}

/// Exact candidate set for general p via the recursive ratio construction.
///
/// For each leading index s the direction has zeros before position s, a one
/// at s, and each later coordinate chosen among the three families' dot
/// products with the coordinates fixed so far. Enumeration order over the
/// index tuples is lexicographic; the emitted set does not depend on it.
pub fn candidates_recursive<F: Real>(
    x: &MultivariateSample<F>,
    y: &MultivariateSample<F>,
    max_evals: u64,
) -> Result<CandidateSet<F>> {
    let p = x.dim();
    if y.dim() != p {
        return Err(Error::DimMismatch {
            expected: p,
            found: y.dim(),
        });
    }
    let required = projected_recursive_count(x.rows(), y.rows(), p);
    if required > max_evals as u128 {
        return Err(Error::BudgetExceeded {
            required,
            allowed: max_evals,
        });
    }

    let levels = RatioLevels::build(x, y, p - 1);
    let mut directions: Vec<Direction<F>> = Vec::new();
    for s in 1..p {
        let mut coords = vec![F::zero(); p];
        coords[s - 1] = F::one();
        extend_direction(&levels, s, 1, p, &mut coords, &mut directions);
    }
    for axis in 0..p {
        directions.push(Direction::axis(p, axis));
    }
    Ok(CandidateSet::from_plain_directions(
        canonicalize(directions),
        Construction::RecursiveExact,
        true,
    ))
}

/// Depth-first choice of coordinate s+d from the three families at level
/// p-d-s+1, dotting components s..s+d-1 with the coordinates fixed so far.
fn extend_direction<F: Real>(
    levels: &RatioLevels<F>,
    s: usize,
    d: usize,
    p: usize,
    coords: &mut Vec<F>,
    out: &mut Vec<Direction<F>>,
) {
    if d > p - s {
        out.push(Direction {
            coords: coords.clone(),
        });
        return;
    }
    let level = p - d - s + 1;
    for family in levels.at(level) {
        for vec in family {
            let mut val = F::zero();
            for idx in (s - 1)..(s + d - 1) {
                val = val + vec[idx] * coords[idx];
            }
            if !val.is_finite() {
                continue;
            }
            coords[s + d - 1] = clean(val);
            extend_direction(levels, s, d + 1, p, coords, out);
        }
    }
    coords[s + d - 1] = F::zero();
}

const MULTISTART_LEVEL1_CAP: usize = 48;
const MULTISTART_LEVEL_CAP: usize = 96;
const MULTISTART_POOL_CAP: usize = 2048;
const SEARCH_STEP_MIN: f64 = 1e-4;
const SEARCH_MAX_SWEEPS: usize = 400;

/// Approximate candidate set: seeded quantile starts over a pruned recursive
/// pool, refined by a coordinate-descent pattern search on the statistic.
/// Deterministic given the seed; `exact = false`.
pub fn candidates_multistart<F: Real>(
    x: &MultivariateSample<F>,
    y: &MultivariateSample<F>,
    params: &DbelParams<F>,
    n_starts: usize,
    seed: u64,
) -> Result<CandidateSet<F>> {
    let p = x.dim();
    if y.dim() != p {
        return Err(Error::DimMismatch {
            expected: p,
            found: y.dim(),
        });
    }
    let mut kernel = ElrKernel::new(x.rows(), y.rows(), params)?;

    let pool = pruned_direction_pool(x, y, seed);
    let mut starts: Vec<Vec<F>> = (0..p).map(|a| Direction::axis(p, a).coords.clone()).collect();
    for t in 0..n_starts {
        let s = 1 + t % (p - 1).max(1);
        let q = (t + 1) as f64 / (n_starts + 1) as f64;
        if let Some(start) = quantile_start(&pool, s, p, q) {
            starts.push(start);
        }
    }

    let mut found: Vec<Direction<F>> = Vec::new();
    for start in starts {
        let refined = pattern_search(&mut kernel, x, y, start);
        if let Some(coords) = normal_form(&refined) {
            found.push(Direction { coords });
        }
    }
    Ok(CandidateSet::from_plain_directions(
        canonicalize(found),
        Construction::MultistartApprox,
        false,
    ))
}

/// A bounded sample of recursive candidates built from seeded subsets of the
/// index tuples at every level.
fn pruned_direction_pool<F: Real>(
    x: &MultivariateSample<F>,
    y: &MultivariateSample<F>,
    seed: u64,
) -> Vec<Direction<F>> {
    let p = x.dim();
    // stream space disjoint from the (replicate, arm) data streams
    let mut rng = indexed_rng(seed, 1 << 62);
    let mut take = |vecs: Vec<Vec<F>>, cap: usize| -> Vec<Vec<F>> {
        if vecs.len() <= cap {
            return vecs;
        }
        let picked = rand::seq::index::sample(&mut rng, vecs.len(), cap).into_vec();
        let mut sorted = picked;
        sorted.sort_unstable();
        sorted.into_iter().map(|i| vecs[i].clone()).collect()
    };

    let l1 = level1_families(x, y);
    let mut levels: Vec<[Vec<Vec<F>>; 3]> = vec![[
        take(dedup_vectors(l1[0].clone()), MULTISTART_LEVEL1_CAP),
        take(dedup_vectors(l1[1].clone()), MULTISTART_LEVEL1_CAP),
        take(dedup_vectors(l1[2].clone()), MULTISTART_LEVEL1_CAP),
    ]];
    for _ in 2..=(p - 1) {
        let prev = levels.last().unwrap();
        levels.push([
            take(next_level(&prev[0]), MULTISTART_LEVEL_CAP),
            take(next_level(&prev[1]), MULTISTART_LEVEL_CAP),
            take(next_level(&prev[2]), MULTISTART_LEVEL_CAP),
        ]);
    }
    let levels = RatioLevels { levels };

    let mut out = Vec::new();
    for s in 1..p {
        let mut coords = vec![F::zero(); p];
        coords[s - 1] = F::one();
        extend_pool(&levels, s, 1, p, &mut coords, &mut out);
        if out.len() >= MULTISTART_POOL_CAP {
            break;
        }
    }
    out.truncate(MULTISTART_POOL_CAP);
    out
}

fn extend_pool<F: Real>(
    levels: &RatioLevels<F>,
    s: usize,
    d: usize,
    p: usize,
    coords: &mut Vec<F>,
    out: &mut Vec<Direction<F>>,
) {
    if out.len() >= MULTISTART_POOL_CAP {
        return;
    }
    if d > p - s {
        out.push(Direction {
            coords: coords.clone(),
        });
        return;
    }
    let level = p - d - s + 1;
    for family in levels.at(level) {
        for vec in family {
            let mut val = F::zero();
            for idx in (s - 1)..(s + d - 1) {
                val = val + vec[idx] * coords[idx];
            }
            if !val.is_finite() {
                continue;
            }
            coords[s + d - 1] = clean(val);
            extend_pool(levels, s, d + 1, p, coords, out);
            if out.len() >= MULTISTART_POOL_CAP {
                return;
            }
        }
    }
    coords[s + d - 1] = F::zero();
}

/// Start with leading form s: zeros, then one, then per-coordinate type-7
/// quantiles of the pool's matching free coordinates.
fn quantile_start<F: Real>(
    pool: &[Direction<F>],
    s: usize,
    p: usize,
    q: f64,
) -> Option<Vec<F>> {
    let members: Vec<&Direction<F>> = pool
        .iter()
        .filter(|d| {
            d.coords[..s - 1].iter().all(|c| *c == F::zero()) && d.coords[s - 1] == F::one()
        })
        .collect();
    if members.is_empty() {
        return None;
    }
    let mut coords = vec![F::zero(); p];
    coords[s - 1] = F::one();
    for c in s..p {
        let mut vals: Vec<F> = members.iter().map(|d| d.coords[c]).collect();
        vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let h = (vals.len() - 1) as f64 * q;
        let lo = h.floor() as usize;
        let frac = F::from_f64(h - h.floor()).unwrap();
        let v = if lo + 1 < vals.len() {
            vals[lo] + frac * (vals[lo + 1] - vals[lo])
        } else {
            vals[lo]
        };
        coords[c] = clean(v);
    }
    Some(coords)
}

/// Scale so the leading nonzero coordinate is one; the statistic is
/// invariant under nonzero scaling, and the normal form keeps the output
/// comparable across runs. Degenerate scalings are dropped.
fn normal_form<F: Real>(coords: &[F]) -> Option<Vec<F>> {
    let lead = *coords.iter().find(|c| **c != F::zero())?;
    let scaled: Vec<F> = coords.iter().map(|c| clean(*c / lead)).collect();
    scaled.iter().all(|c| c.is_finite()).then_some(scaled)
}

/// Coordinate-wise compass search, ascent on log TS. Deterministic: fixed
/// sweep order, halving steps, no randomness.
fn pattern_search<F: Real>(
    kernel: &mut ElrKernel<F>,
    x: &MultivariateSample<F>,
    y: &MultivariateSample<F>,
    mut coords: Vec<F>,
) -> Vec<F> {
    let p = coords.len();
    let mut best = kernel.eval(x, y, &coords);
    let mut step = F::one();
    let step_min = F::from_f64(SEARCH_STEP_MIN).unwrap();
    let two = F::one() + F::one();
    let mut sweeps = 0;
    while step >= step_min && sweeps < SEARCH_MAX_SWEEPS {
        sweeps += 1;
        let mut improved = false;
        for c in 0..p {
            for dir in [F::one(), -F::one()] {
                let saved = coords[c];
                coords[c] = clean(saved + dir * step);
                if coords[c].is_finite() && coords.iter().any(|v| *v != F::zero()) {
                    let val = kernel.eval(x, y, &coords);
                    if val > best {
                        best = val;
                        improved = true;
                        continue;
                    }
                }
                coords[c] = saved;
            }
        }
        if !improved {
            step = step / two;
        }
    }
    coords
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::elr::log_ts_for_direction;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sample2(rows: &[[f64; 2]]) -> MultivariateSample<f64> {
        MultivariateSample::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>())
            .unwrap()
    }

    fn random_sample(rng: &mut ChaCha8Rng, rows: usize, dim: usize) -> MultivariateSample<f64> {
        MultivariateSample::from_rows(
            &(0..rows)
                .map(|_| (0..dim).map(|_| rng.gen_range(-3.0..3.0)).collect())
                .collect::<Vec<_>>(),
        )
        .unwrap()
    }

    #[test]
    fn direction_validation() {
        assert!(Direction::new(vec![0.0, 0.0]).is_err());
        assert!(Direction::new(vec![1.0, f64::NAN]).is_err());
        assert!(Direction::new(vec![0.0, -1.0]).is_ok());
    }

    #[test]
    fn p2_single_pair_gives_one_slope_plus_axes() {
        let x = sample2(&[[0.0, 0.0]]);
        let y = sample2(&[[1.0, 1.0]]);
        let set = candidates_p2(&x, &y).unwrap();
        let coords: Vec<&[f64]> = set.directions.iter().map(|d| d.coords()).collect();
        assert_eq!(coords, vec![&[0.0, 1.0][..], &[1.0, -1.0], &[1.0, 0.0]]);
        assert!(set.exact);
    }

    #[test]
    fn p2_zero_denominator_drops_slope() {
        let x = sample2(&[[0.0, 0.0]]);
        let y = sample2(&[[1.0, 0.0]]);
        let set = candidates_p2(&x, &y).unwrap();
        let coords: Vec<&[f64]> = set.directions.iter().map(|d| d.coords()).collect();
        assert_eq!(coords, vec![&[0.0, 1.0][..], &[1.0, 0.0]]);
    }

    #[test]
    fn p2_generic_count_is_pair_count_plus_axes() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = random_sample(&mut rng, 10, 2);
        let y = random_sample(&mut rng, 10, 2);
        let set = candidates_p2(&x, &y).unwrap();
        assert_eq!(set.len(), 20 * 19 / 2 + 2);
        // never more than the pair count plus axes, for any input
        for _ in 0..10 {
            let n = rng.gen_range(1..=8);
            let m = rng.gen_range(1..=8);
            let x = random_sample(&mut rng, n, 2);
            let y = random_sample(&mut rng, m, 2);
            let t = n + m;
            assert!(candidates_p2(&x, &y).unwrap().len() <= t * (t - 1) / 2 + 2);
        }
    }

    #[test]
    fn recursive_p2_equals_p2() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..20 {
            let n = rng.gen_range(2..=8);
            let m = rng.gen_range(2..=8);
            let x = random_sample(&mut rng, n, 2);
            let y = random_sample(&mut rng, m, 2);
            let p2 = candidates_p2(&x, &y).unwrap();
            let rec = candidates_recursive(&x, &y, 1_000_000).unwrap();
            let a: Vec<&[f64]> = p2.directions.iter().map(|d| d.coords()).collect();
            let b: Vec<&[f64]> = rec.directions.iter().map(|d| d.coords()).collect();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn recursive_budget_error_reports_counts() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = random_sample(&mut rng, 30, 3);
        let y = random_sample(&mut rng, 30, 3);
        match candidates_recursive(&x, &y, 1_000_000).unwrap_err() {
            Error::BudgetExceeded { required, allowed } => {
                assert!(required > 1_000_000);
                assert_eq!(allowed, 1_000_000);
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    /// Transcription of the three-variate construction: level-2 ratios for
    /// the second coordinate, level-1 dot products for the third.
    fn transcribed_p3(
        x: &MultivariateSample<f64>,
        y: &MultivariateSample<f64>,
    ) -> Vec<Vec<f64>> {
        let n = x.rows();
        let m = y.rows();
        let w1 = |i: usize, j: usize| (x.row(i)[0] - y.row(j)[0]) / (y.row(j)[2] - x.row(i)[2]);
        let w2 = |i: usize, j: usize| (x.row(i)[1] - y.row(j)[1]) / (y.row(j)[2] - x.row(i)[2]);
        let u1 = |i: usize, r: usize| (x.row(i)[0] - x.row(r)[0]) / (x.row(r)[2] - x.row(i)[2]);
        let u2 = |i: usize, r: usize| (x.row(i)[1] - x.row(r)[1]) / (x.row(r)[2] - x.row(i)[2]);
        let v1 = |j: usize, s: usize| (y.row(j)[0] - y.row(s)[0]) / (y.row(s)[2] - y.row(j)[2]);
        let v2 = |j: usize, s: usize| (y.row(j)[1] - y.row(s)[1]) / (y.row(s)[2] - y.row(j)[2]);

        let w_pairs: Vec<(usize, usize)> = (0..n)
            .flat_map(|i| (0..m).map(move |j| (i, j)))
            .collect();
        let u_pairs: Vec<(usize, usize)> = (0..n)
            .flat_map(|i| (0..n).filter(move |&r| r != i).map(move |r| (i, r)))
            .collect();
        let v_pairs: Vec<(usize, usize)> = (0..m)
            .flat_map(|j| (0..m).filter(move |&s| s != j).map(move |s| (j, s)))
            .collect();

        // u2 choices: second-level ratios within each family
        let mut u2_choices: Vec<f64> = Vec::new();
        let mut push_level2 = |pairs: &[(usize, usize)], f1: &dyn Fn(usize, usize) -> f64, f2: &dyn Fn(usize, usize) -> f64| {
            for (a_idx, &(i1, j1)) in pairs.iter().enumerate() {
                for &(i2, j2) in &pairs[a_idx + 1..] {
                    let val =
                        (f1(i1, j1) - f1(i2, j2)) / (f2(i2, j2) - f2(i1, j1));
                    if val.is_finite() {
                        u2_choices.push(val);
                    }
                }
            }
        };
        push_level2(&w_pairs, &w1, &w2);
        push_level2(&u_pairs, &u1, &u2);
        push_level2(&v_pairs, &v1, &v2);

        let mut dirs: Vec<Vec<f64>> = Vec::new();
        for &u2v in &u2_choices {
            let mut u3s: Vec<f64> = Vec::new();
            for &(i, j) in &w_pairs {
                u3s.push(w1(i, j) + u2v * w2(i, j));
            }
            for &(i, r) in &u_pairs {
                u3s.push(u1(i, r) + u2v * u2(i, r));
            }
            for &(j, s) in &v_pairs {
                u3s.push(v1(j, s) + u2v * v2(j, s));
            }
            for u3v in u3s {
                if u3v.is_finite() {
                    dirs.push(vec![1.0, u2v, u3v]);
                }
            }
        }
        // leading index two
        for &(i, j) in &w_pairs {
            let u3v = w2(i, j);
            if u3v.is_finite() {
                dirs.push(vec![0.0, 1.0, u3v]);
            }
        }
        for &(i, r) in &u_pairs {
            let u3v = u2(i, r);
            if u3v.is_finite() {
                dirs.push(vec![0.0, 1.0, u3v]);
            }
        }
        for &(j, s) in &v_pairs {
            let u3v = v2(j, s);
            if u3v.is_finite() {
                dirs.push(vec![0.0, 1.0, u3v]);
            }
        }
        dirs.push(vec![0.0, 0.0, 1.0]);
        dirs.push(vec![0.0, 1.0, 0.0]);
        dirs.push(vec![1.0, 0.0, 0.0]);
        for d in &mut dirs {
            for c in d.iter_mut() {
                if *c == 0.0 {
                    *c = 0.0;
                }
            }
        }
        dirs.sort_by(|a, b| super::lex_cmp(a, b));
        dirs.dedup();
        dirs
    }

    #[test]
    fn recursive_p3_matches_transcription() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..5 {
            let x = random_sample(&mut rng, 3, 3);
            let y = random_sample(&mut rng, 3, 3);
            let rec = candidates_recursive(&x, &y, 1_000_000).unwrap();
            let got: Vec<Vec<f64>> = rec.directions.iter().map(|d| d.coords().to_vec()).collect();
            let expected = transcribed_p3(&x, &y);
            assert_eq!(got, expected);
        }
    }

    #[test]
    fn arm_swap_preserves_achievable_values() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let params = DbelParams::default();
        let x = random_sample(&mut rng, 5, 2);
        let y = random_sample(&mut rng, 5, 2);
        let set_xy = candidates_p2(&x, &y).unwrap();
        let set_yx = candidates_p2(&y, &x).unwrap();
        let mut vals_xy: Vec<f64> = set_xy
            .directions
            .iter()
            .map(|u| log_ts_for_direction(&x, &y, u, &params).unwrap())
            .collect();
        let mut vals_yx: Vec<f64> = set_yx
            .directions
            .iter()
            .map(|u| log_ts_for_direction(&y, &x, u, &params).unwrap())
            .collect();
        vals_xy.sort_by(|a, b| a.partial_cmp(b).unwrap());
        vals_yx.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(vals_xy, vals_yx);
    }

    #[test]
    fn grid_never_beats_p2_candidates_small() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let params = DbelParams::default();
        for _ in 0..10 {
            let n = rng.gen_range(4..=6);
            let m = rng.gen_range(4..=6);
            let x = random_sample(&mut rng, n, 2);
            let y = random_sample(&mut rng, m, 2);
            let set = candidates_p2(&x, &y).unwrap();
            let best_cand = set
                .directions
                .iter()
                .map(|u| log_ts_for_direction(&x, &y, u, &params).unwrap())
                .fold(f64::NEG_INFINITY, f64::max);

            let mut slopes: Vec<f64> = set
                .directions
                .iter()
                .filter(|d| d.coords()[0] == 1.0)
                .map(|d| d.coords()[1])
                .collect();
            slopes.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let mut grid = slopes.clone();
            for w in slopes.windows(2) {
                grid.push((w[0] + w[1]) / 2.0);
            }
            grid.push(slopes[0] - 1.0);
            grid.push(slopes[slopes.len() - 1] + 1.0);
            let mut best_grid = f64::NEG_INFINITY;
            for g in grid {
                let u = Direction::new(vec![1.0, g]).unwrap();
                best_grid = best_grid.max(log_ts_for_direction(&x, &y, &u, &params).unwrap());
            }
            for axis in [Direction::axis(2, 0), Direction::axis(2, 1)] {
                best_grid = best_grid.max(log_ts_for_direction(&x, &y, &axis, &params).unwrap());
            }
            assert!(best_grid <= best_cand + 1e-12);
        }
    }

    #[test]
    fn multistart_is_deterministic_and_dominated() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let params = DbelParams::default();
        let x = random_sample(&mut rng, 8, 2);
        let y = random_sample(&mut rng, 8, 2);
        let a = candidates_multistart(&x, &y, &params, 16, 42).unwrap();
        let b = candidates_multistart(&x, &y, &params, 16, 42).unwrap();
        let coords_a: Vec<&[f64]> = a.directions.iter().map(|d| d.coords()).collect();
        let coords_b: Vec<&[f64]> = b.directions.iter().map(|d| d.coords()).collect();
        assert_eq!(coords_a, coords_b);
        assert!(!a.exact);
        // normal form: the leading nonzero coordinate is one
        for d in &a.directions {
            let lead = d.coords().iter().find(|c| **c != 0.0).unwrap();
            assert_eq!(*lead, 1.0);
        }

        let exact_max = candidates_p2(&x, &y)
            .unwrap()
            .directions
            .iter()
            .map(|u| log_ts_for_direction(&x, &y, u, &params).unwrap())
            .fold(f64::NEG_INFINITY, f64::max);
        let approx_max = a
            .directions
            .iter()
            .map(|u| log_ts_for_direction(&x, &y, u, &params).unwrap())
            .fold(f64::NEG_INFINITY, f64::max);
        assert!(approx_max <= exact_max + 1e-12);
    }

    #[test]
    fn multistart_beats_axes_when_axes_are_starts() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let params = DbelParams::default();
        let x = random_sample(&mut rng, 5, 3);
        let y = random_sample(&mut rng, 5, 3);
        let set = candidates_multistart(&x, &y, &params, 8, 7).unwrap();
        let approx_max = set
            .directions
            .iter()
            .map(|u| log_ts_for_direction(&x, &y, u, &params).unwrap())
            .fold(f64::NEG_INFINITY, f64::max);
        let axis_max = (0..3)
            .map(|a| {
                log_ts_for_direction(&x, &y, &Direction::axis(3, a), &params).unwrap()
            })
            .fold(f64::NEG_INFINITY, f64::max);
        assert!(approx_max >= axis_max);
    }
}
