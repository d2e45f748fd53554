//! Monte Carlo oracle for the pairing procedures.
//!
//! Labeled strings are sampled from expected count proportions, then random
//! pairing with parity comparison and actively odd-parity pairing are executed
//! literally on Alice's and Bob's bits. Empirical tallies are compared with the
//! analytic expectations evaluated on the realized string composition.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{Binomial, ContinuousCDF, DiscreteCDF, Normal};

use crate::decoy::UntaggedStats;
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::postproc::{self, ClassStats, Label, MergedLabel, PairTable, ZWindowCounts};

/// Identifier of the generator behind every seeded run.
pub const PRNG_ALGORITHM: &str = "ChaCha8Rng/rand_chacha-0.3/seed_from_u64";

/// `|z|` above which a statistic is flagged.
pub const Z_FLAG: f64 = 5.0;

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledString {
    pub labels: Vec<Label>,
    pub untagged: Vec<bool>,
}

impl LabeledString {
    pub fn new(labels: Vec<Label>, untagged: Vec<bool>) -> Result<Self> {
        if labels.len() != untagged.len() {
            return Err(Error::Consistency("label and untagged vectors differ in length".into()));
        }
        if let Some(i) = (0..labels.len()).find(|&i| untagged[i] && labels[i].is_error()) {
            return Err(Error::Consistency(format!(
                "position {i} is untagged but carries a bit-flip error"
            )));
        }
        Ok(Self { labels, untagged })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn alice_bit(&self, i: usize) -> u8 {
        self.labels[i].alice_bit()
    }

    pub fn bob_bit(&self, i: usize) -> u8 {
        self.labels[i].bob_bit()
    }

    /// Realized label counts.
    pub fn counts(&self) -> ZWindowCounts {
        let mut c = [0.0f64; 4];
        for l in &self.labels {
            c[l.index()] += 1.0;
        }
        ZWindowCounts {
            n_c0: c[0],
            n_c1: c[1],
            n_d: c[2],
            n_v: c[3],
        }
    }

    /// Realized untagged counts with the given phase error attached.
    pub fn untagged_stats(&self, e1ph: f64) -> UntaggedStats {
        let (mut n1_0, mut n1_1) = (0.0, 0.0);
        for (l, &u) in self.labels.iter().zip(&self.untagged) {
            match (l, u) {
                (Label::C0, true) => n1_0 += 1.0,
                (Label::C1, true) => n1_1 += 1.0,
                _ => {}
            }
        }
        UntaggedStats {
            n1: n1_0 + n1_1,
            n1_0,
            n1_1,
            e1ph,
            n0: 0.0,
            expected_n1: n1_0 + n1_1,
            expected_e1ph: e1ph,
        }
    }
}

/// Draws `len` labels with probabilities `n_a / n_t`, then flags C0 and C1
/// positions untagged with probabilities `n_1^0 / n_C0` and `n_1^1 / n_C1`.
pub fn sample_string(counts: &ZWindowCounts, untagged: &UntaggedStats, len: usize, seed: u64) -> Result<LabeledString> {
    let n_t = counts.n_t();
    if !(n_t > 0.0) {
        return Err(Error::Consistency("cannot sample from zero counts".into()));
    }
    let frac = |num: f64, den: f64, name: &str| -> Result<f64> {
        if num > den * (1.0 + 1e-12) {
            return Err(Error::Consistency(format!(
                "{name}: untagged count {num} exceeds event count {den}"
            )));
        }
        Ok(if den > 0.0 { (num / den).min(1.0) } else { 0.0 })
    };
    let u0 = frac(untagged.n1_0, counts.n_c0, "C0")?;
    let u1 = frac(untagged.n1_1, counts.n_c1, "C1")?;
    let cdf = {
        let mut acc = 0.0;
        Label::ALL.map(|l| {
            acc += counts.get(l) / n_t;
            acc
        })
    };
    let mut rng = rng_for(seed, 0);
    let mut labels = Vec::with_capacity(len);
    let mut flags = Vec::with_capacity(len);
    for _ in 0..len {
        let x: f64 = rng.gen();
        let label = Label::ALL[cdf.iter().position(|&c| x < c).unwrap_or(3)];
        let y: f64 = rng.gen();
        let flag = match label {
            Label::C0 => y < u0,
            Label::C1 => y < u1,
            _ => false,
        };
        labels.push(label);
        flags.push(flag);
    }
    LabeledString::new(labels, flags)
}

/// Tallies from one random-pairing run.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalBfer {
    pub pairs: PairTable,
    pub n_pairs: usize,
    pub kept_pairs: usize,
    pub discarded_pairs: usize,
    pub leftover: usize,
    /// Class 1 is odd Bob parity, class 2 Bob bits `00`, class 3 Bob bits `11`.
    pub classes: [ClassStats; 3],
    pub untagged_survivors: usize,
    pub untagged_survivor_errors: usize,
    /// Pairs with differing Bob bits.
    pub odd_pairs: usize,
    /// Odd pairs made of one untagged C1 and one untagged C0.
    pub odd_untagged: usize,
}

impl EmpiricalBfer {
    pub fn survivors(&self) -> f64 {
        self.kept_pairs as f64
    }
}

/// Uniform random perfect matching, parity comparison, first bit kept.
pub fn run_bfer(s: &LabeledString, seed: u64) -> Result<EmpiricalBfer> {
    let n = s.len();
    if n < 2 {
        return Err(Error::Degenerate(format!(
            "random pairing needs at least 2 bits, got {n}"
        )));
    }
    let mut order: Vec<u32> = (0..n as u32).collect();
    order.shuffle(&mut rng_for(seed, 1));
    let mut out = EmpiricalBfer {
        pairs: PairTable::default(),
        n_pairs: n / 2,
        kept_pairs: 0,
        discarded_pairs: 0,
        leftover: n % 2,
        classes: [ClassStats::default(); 3],
        untagged_survivors: 0,
        untagged_survivor_errors: 0,
        odd_pairs: 0,
        odd_untagged: 0,
    };
    for pair in order.chunks_exact(2) {
        let (i, j) = (pair[0] as usize, pair[1] as usize);
        let (li, lj) = (s.labels[i], s.labels[j]);
        out.pairs.add(li, lj, 1.0);
        let bob = (s.bob_bit(i), s.bob_bit(j));
        let both_untagged = s.untagged[i] && s.untagged[j];
        if bob.0 != bob.1 {
            out.odd_pairs += 1;
            if both_untagged {
                out.odd_untagged += 1;
            }
        }
        if (s.alice_bit(i) ^ s.alice_bit(j)) != (bob.0 ^ bob.1) {
            out.discarded_pairs += 1;
            continue;
        }
        out.kept_pairs += 1;
        let class = match bob {
            (0, 0) => 1,
            (1, 1) => 2,
            _ => 0,
        };
        let error = s.alice_bit(i) != bob.0;
        out.classes[class].count += 1.0;
        if error {
            out.classes[class].errors += 1.0;
        }
        if both_untagged {
            out.untagged_survivors += 1;
            if error {
                out.untagged_survivor_errors += 1;
            }
        }
    }
    check_conservation(n, &out)?;
    Ok(out)
}

fn check_conservation(n: usize, out: &EmpiricalBfer) -> Result<()> {
    if 2 * out.kept_pairs + 2 * out.discarded_pairs + out.leftover != n {
        return Err(Error::Consistency(format!(
            "pairing lost bits: 2*{} + 2*{} + {} != {n}",
            out.kept_pairs, out.discarded_pairs, out.leftover
        )));
    }
    if out.untagged_survivor_errors != 0 {
        return Err(Error::Consistency(format!(
            "{} untagged survivors carry bit-flip errors",
            out.untagged_survivor_errors
        )));
    }
    Ok(())
}

/// Tallies from one actively odd-parity pairing run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmpiricalAopp {
    pub n_a: usize,
    /// Pairs made of one C1 and one C0.
    pub n_cc: usize,
    /// Pairs made of one V and one D.
    pub n_vd: usize,
    pub survivors: usize,
    pub errors: usize,
    /// Surviving pairs whose two bits are both untagged.
    pub untagged_survivors: usize,
}

impl EmpiricalAopp {
    pub fn e_z(&self) -> f64 {
        if self.survivors == 0 {
            0.0
        } else {
            self.errors as f64 / self.survivors as f64
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AoppSampler {
    /// Draw the first bit from everything left, the second from the opposite-valued pool.
    Sequential,
    /// Shuffle both value pools and zip them.
    ShuffleZip,
}

fn bob_pools(s: &LabeledString) -> Result<[Vec<u32>; 2]> {
    let mut pools = [Vec::new(), Vec::new()];
    for i in 0..s.len() {
        pools[s.bob_bit(i) as usize].push(i as u32);
    }
    if pools[0].is_empty() || pools[1].is_empty() {
        return Err(Error::Degenerate(format!(
            "AOPP needs both bit values, got N_0 = {}, N_1 = {}",
            pools[0].len(),
            pools[1].len()
        )));
    }
    Ok(pools)
}

pub fn run_aopp(s: &LabeledString, seed: u64, sampler: AoppSampler) -> Result<EmpiricalAopp> {
    let mut pools = bob_pools(s)?;
    let mut rng = rng_for(seed, 2);
    let mut pairs: Vec<(u32, u32)> = Vec::with_capacity(pools[0].len().min(pools[1].len()));
    match sampler {
        AoppSampler::Sequential => {
            while !pools[0].is_empty() && !pools[1].is_empty() {
                let remaining = pools[0].len() + pools[1].len();
                let pick = rng.gen_range(0..remaining);
                let (first_pool, idx) = if pick < pools[0].len() {
                    (0, pick)
                } else {
                    (1, pick - pools[0].len())
                };
                let first = pools[first_pool].swap_remove(idx);
                let other = 1 - first_pool;
                let j = rng.gen_range(0..pools[other].len());
                let second = pools[other].swap_remove(j);
                pairs.push((first, second));
            }
        }
        AoppSampler::ShuffleZip => {
            for pool in pools.iter_mut() {
                pool.shuffle(&mut rng);
            }
            for (&a, &b) in pools[0].iter().zip(&pools[1]) {
                pairs.push(if rng.gen::<bool>() { (a, b) } else { (b, a) });
            }
        }
    }
    let mut out = EmpiricalAopp {
        n_a: pairs.len(),
        n_cc: 0,
        n_vd: 0,
        survivors: 0,
        errors: 0,
        untagged_survivors: 0,
    };
    for (i, j) in pairs {
        let (i, j) = (i as usize, j as usize);
        let set = |a: Label, b: Label| (s.labels[i] == a && s.labels[j] == b) || (s.labels[i] == b && s.labels[j] == a);
        if set(Label::C0, Label::C1) {
            out.n_cc += 1;
        } else if set(Label::D, Label::V) {
            out.n_vd += 1;
        }
        // Bob's parity is odd by construction
        if s.alice_bit(i) == s.alice_bit(j) {
            continue;
        }
        out.survivors += 1;
        if s.alice_bit(i) != s.bob_bit(i) {
            out.errors += 1;
        }
        if s.untagged[i] && s.untagged[j] {
            out.untagged_survivors += 1;
        }
    }
    Ok(out)
}

/// Below this many expected successes (or failures) the normal approximation
/// gives way to the exact binomial tail.
pub const EXACT_TAIL_BELOW: f64 = 30.0;

/// Normal-equivalent z of `successes` out of `trials` Bernoulli(`p`) draws:
/// the one-sided exact tail probability mapped through the inverse normal
/// CDF. Keeps `normal_z` when both expected tallies are large.
fn binomial_z(trials: f64, p: f64, successes: f64, normal_z: f64) -> f64 {
    let mean = trials * p;
    if trials < 1.0 || mean.min(trials - mean) >= EXACT_TAIL_BELOW {
        return normal_z;
    }
    let (n, k) = (trials.round() as u64, successes.round().max(0.0) as u64);
    let Ok(b) = Binomial::new(p, n) else {
        return normal_z;
    };
    let above = k as f64 > mean;
    let tail = if above { b.sf(k - 1) } else { b.cdf(k) };
    let z = (-Normal::standard().inverse_cdf(tail)).max(0.0);
    if above {
        z
    } else {
        -z
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ZRow {
    pub statistic: String,
    pub analytic: f64,
    pub empirical: f64,
    pub sigma: f64,
    pub z: f64,
}

impl ZRow {
    pub fn new(statistic: impl Into<String>, analytic: f64, empirical: f64, sigma: f64) -> Self {
        let diff = empirical - analytic;
        let z = if sigma > 0.0 {
            diff / sigma
        } else if diff.abs() <= 1e-9 * analytic.abs().max(1.0) {
            0.0
        } else {
            diff.signum() * f64::INFINITY
        };
        Self {
            statistic: statistic.into(),
            analytic,
            empirical,
            sigma,
            z,
        }
    }

    /// Count out of `trials` with binomial spread.
    pub fn count(statistic: impl Into<String>, analytic: f64, empirical: f64, trials: f64) -> Self {
        let p = if trials > 0.0 {
            (analytic / trials).clamp(0.0, 1.0)
        } else {
            0.0
        };
        let row = Self::new(statistic, analytic, empirical, (trials * p * (1.0 - p)).sqrt());
        let z = binomial_z(trials, p, empirical, row.z);
        Self { z, ..row }
    }

    /// Rate estimated from `trials` events.
    pub fn rate(statistic: impl Into<String>, analytic: f64, empirical: f64, trials: f64) -> Self {
        let p = analytic.clamp(0.0, 1.0);
        let sigma = if trials > 0.0 {
            (p * (1.0 - p) / trials).sqrt()
        } else {
            0.0
        };
        let row = Self::new(statistic, analytic, empirical, sigma);
        let z = binomial_z(trials, p, empirical * trials, row.z);
        Self { z, ..row }
    }

    pub fn flagged(&self) -> bool {
        !(self.z.abs() <= Z_FLAG)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ZReport {
    pub seed: u64,
    pub rows: Vec<ZRow>,
}

impl ZReport {
    pub fn flagged(&self) -> Vec<&ZRow> {
        self.rows.iter().filter(|r| r.flagged()).collect()
    }

    pub fn passed(&self) -> bool {
        self.rows.iter().all(|r| !r.flagged())
    }

    pub fn max_abs_z(&self) -> f64 {
        self.rows.iter().map(|r| r.z.abs()).fold(0.0, f64::max)
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!(
            "# prng={PRNG_ALGORITHM} seed={}\nstatistic,analytic,empirical,sigma,z\n",
            self.seed
        );
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{:e},{:e},{:e},{:.4}",
                r.statistic, r.analytic, r.empirical, r.sigma, r.z
            );
        }
        out
    }
}

/// Pairs each row with the analytic value the same statistic takes when
/// `empirical` is replaced by the expectations; identical inputs give `z = 0`.
pub fn compare(empirical: &[(String, f64)], analytic: &[(String, f64, f64)]) -> Result<Vec<ZRow>> {
    if empirical.len() != analytic.len() {
        return Err(Error::Consistency("statistic lists differ in length".into()));
    }
    empirical
        .iter()
        .zip(analytic)
        .map(|((name, e), (aname, a, sigma))| {
            if name != aname {
                return Err(Error::Consistency(format!("statistic mismatch: {name} vs {aname}")));
            }
            Ok(ZRow::new(name.clone(), *a, *e, *sigma))
        })
        .collect()
}

pub fn compare_bfer(emp: &EmpiricalBfer, s: &LabeledString) -> Result<Vec<ZRow>> {
    let counts = s.counts();
    let untagged = s.untagged_stats(0.0);
    let a = postproc::bfer_expectations(&counts, &untagged)?;
    let odd = postproc::odd_parity_sift(&counts, &untagged)?;
    let m = emp.n_pairs as f64;
    let mut rows = Vec::new();
    for x in MergedLabel::ALL {
        for y in MergedLabel::ALL {
            rows.push(ZRow::count(
                format!("n_{}{}", x.name(), y.name()),
                a.pairs.merged(x, y),
                emp.pairs.merged(x, y),
                m,
            ));
        }
    }
    for x in [Label::C0, Label::C1] {
        for y in [Label::C0, Label::C1] {
            rows.push(ZRow::count(
                format!("n_{}{}", x.name(), y.name()),
                a.pairs.get(x, y),
                emp.pairs.get(x, y),
                m,
            ));
        }
    }
    rows.push(ZRow::count("survivors", a.survivors, emp.survivors(), m));
    for (i, (ac, ec)) in a.classes.iter().zip(&emp.classes).enumerate() {
        rows.push(ZRow::count(format!("n_t{}", i + 1), ac.count, ec.count, m));
        rows.push(ZRow::rate(
            format!("E_{}", i + 1),
            ac.error_rate(),
            ec.error_rate(),
            ec.count,
        ));
    }
    rows.push(ZRow::count("n1_tilde", a.n1_tilde, emp.untagged_survivors as f64, m));
    rows.push(ZRow::count("N_R", odd.n_r, emp.odd_pairs as f64, m));
    rows.push(ZRow::count("n1_prime", odd.n1_prime, emp.odd_untagged as f64, m));
    Ok(rows)
}

pub fn compare_aopp(emp: &EmpiricalAopp, s: &LabeledString, tag: &str) -> Result<Vec<ZRow>> {
    let counts = s.counts();
    let a = postproc::aopp(&counts, &s.untagged_stats(0.0))?;
    let n_a = emp.n_a as f64;
    Ok(vec![
        ZRow::new(format!("{tag}N_A"), a.n_a, n_a, 0.0),
        ZRow::count(format!("{tag}N_C1C0"), a.n_cc, emp.n_cc as f64, n_a),
        ZRow::count(format!("{tag}N_VD"), a.n_vd, emp.n_vd as f64, n_a),
        ZRow::count(format!("{tag}N_t"), a.survivors, emp.survivors as f64, n_a),
        ZRow::rate(format!("{tag}E_Z"), a.e_z, emp.e_z(), emp.survivors as f64),
        ZRow::count(format!("{tag}n1_pp"), a.n1_pp, emp.untagged_survivors as f64, n_a),
    ])
}

/// Outcome of one seeded oracle run.
#[derive(Debug, Clone, PartialEq)]
pub struct SeedRun {
    pub report: ZReport,
    pub bfer: EmpiricalBfer,
    pub aopp: EmpiricalAopp,
    /// `N_R <= N_A <= 2 N_R` with `N_R` from the random matching on the same
    /// string; the upper side allows `Z_FLAG` binomial spreads of `N_R`.
    pub sandwich_ok: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McConfig {
    pub len: usize,
    /// Multiplies every analytic expectation; any value other than 1 is a fault.
    pub fault_scale: f64,
}

impl Default for McConfig {
    fn default() -> Self {
        Self {
            len: 1_000_000,
            fault_scale: 1.0,
        }
    }
}

pub fn verify_seed(counts: &ZWindowCounts, untagged: &UntaggedStats, cfg: &McConfig, seed: u64) -> Result<SeedRun> {
    let s = sample_string(counts, untagged, cfg.len, seed)?;
    let bfer = run_bfer(&s, seed)?;
    let aopp = run_aopp(&s, seed, AoppSampler::Sequential)?;
    let zip = run_aopp(&s, seed, AoppSampler::ShuffleZip)?;
    let mut rows = compare_bfer(&bfer, &s)?;
    rows.extend(compare_aopp(&aopp, &s, "")?);
    rows.extend(compare_aopp(&zip, &s, "zip:")?);
    if cfg.fault_scale != 1.0 {
        for r in rows.iter_mut() {
            *r = ZRow::new(r.statistic.clone(), r.analytic * cfg.fault_scale, r.empirical, r.sigma);
        }
    }
    let n_r = bfer.odd_pairs as f64;
    let m = bfer.n_pairs as f64;
    let sigma_r = (n_r * (1.0 - n_r / m)).sqrt();
    let n_a = aopp.n_a as f64;
    let sandwich_ok = n_a >= n_r && n_a <= 2.0 * (n_r + Z_FLAG * sigma_r);
    Ok(SeedRun {
        report: ZReport { seed, rows },
        bfer,
        aopp,
        sandwich_ok,
    })
}

pub fn verify_seeds(
    counts: &ZWindowCounts,
    untagged: &UntaggedStats,
    cfg: &McConfig,
    seeds: &[u64],
    exec: Execution,
) -> Result<Vec<SeedRun>> {
    exec.map(seeds, |&seed| verify_seed(counts, untagged, cfg, seed))
        .into_iter()
        .collect()
}
