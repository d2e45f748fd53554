//! Counting formulas and key lengths for the sending-or-not-sending protocol
//! with and without two-way error rejection.
//!
//! Effective Z-window events carry one of four labels:
//!
//! | label | decisions (Alice, Bob)    | Alice bit | Bob bit |
//! |-------|---------------------------|-----------|---------|
//! | `C0`  | not-sending, sending      | 0         | 0       |
//! | `C1`  | sending, not-sending      | 1         | 1       |
//! | `D`   | sending, sending          | 1         | 0       |
//! | `V`   | not-sending, not-sending  | 0         | 1       |
//!
//! `D` and `V` events are the bit-flip errors. All expectations here treat the
//! counts as real numbers; pair counts use the product form
//! `n_ab = (n_t / 2) (n_a / n_t) (n_b / n_t)`.

use crate::channel::{ExperimentParams, ProtocolParams, WindowRates};
use crate::decoy::UntaggedStats;
use crate::error::{Error, Result};
use crate::mathcore::entropy;

/// Event label of an effective Z window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    C0,
    C1,
    D,
    V,
}

impl Label {
    pub const ALL: [Label; 4] = [Label::C0, Label::C1, Label::D, Label::V];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn alice_bit(self) -> u8 {
        match self {
            Label::C0 | Label::V => 0,
            Label::C1 | Label::D => 1,
        }
    }

    pub fn bob_bit(self) -> u8 {
        match self {
            Label::C0 | Label::D => 0,
            Label::C1 | Label::V => 1,
        }
    }

    pub fn is_error(self) -> bool {
        self.alice_bit() != self.bob_bit()
    }

    pub fn name(self) -> &'static str {
        match self {
            Label::C0 => "C0",
            Label::C1 => "C1",
            Label::D => "D",
            Label::V => "V",
        }
    }
}

/// Expected effective Z-window counts, refined by label.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZWindowCounts {
    pub n_c0: f64,
    pub n_c1: f64,
    pub n_d: f64,
    pub n_v: f64,
}

impl ZWindowCounts {
    pub fn new(n_c0: f64, n_c1: f64, n_d: f64, n_v: f64) -> Result<Self> {
        for (name, v) in [("n_C0", n_c0), ("n_C1", n_c1), ("n_D", n_d), ("n_V", n_v)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Consistency(format!("{name} = {v} is not a non-negative count")));
            }
        }
        Ok(Self { n_c0, n_c1, n_d, n_v })
    }

    pub fn get(&self, label: Label) -> f64 {
        match label {
            Label::C0 => self.n_c0,
            Label::C1 => self.n_c1,
            Label::D => self.n_d,
            Label::V => self.n_v,
        }
    }

    pub fn n_t(&self) -> f64 {
        self.n_c0 + self.n_c1 + self.n_d + self.n_v
    }

    pub fn n_c(&self) -> f64 {
        self.n_c0 + self.n_c1
    }

    /// Bob's bits equal to 0: `N_0 = n_D + n_C0`.
    pub fn group0(&self) -> f64 {
        self.n_d + self.n_c0
    }

    /// Bob's bits equal to 1: `N_1 = n_V + n_C1`.
    pub fn group1(&self) -> f64 {
        self.n_v + self.n_c1
    }

    /// `E_0 = n_D / N_0`.
    pub fn e_group0(&self) -> f64 {
        ratio(self.n_d, self.group0())
    }

    /// `E_1 = n_V / N_1`.
    pub fn e_group1(&self) -> f64 {
        ratio(self.n_v, self.group1())
    }

    /// `E_Z = (n_D + n_V) / n_t`.
    pub fn e_z(&self) -> f64 {
        ratio(self.n_d + self.n_v, self.n_t())
    }
}

fn ratio(num: f64, den: f64) -> f64 {
    if den > 0.0 {
        num / den
    } else {
        0.0
    }
}

/// `n * H(e)` with the convention that an empty class contributes nothing.
fn weighted_entropy(n: f64, e: f64) -> Result<f64> {
    if n == 0.0 {
        Ok(0.0)
    } else {
        Ok(n * entropy(e.clamp(0.0, 1.0))?)
    }
}

/// Expected refined counts over `N` windows.
pub fn z_window_counts(exp: &ExperimentParams, proto: &ProtocolParams, rates: &WindowRates) -> ZWindowCounts {
    let windows = exp.total_pulses * proto.p_z * proto.p_z;
    let p = proto.p_send;
    ZWindowCounts {
        n_c0: windows * p * (1.0 - p) * rates.q_s,
        n_c1: windows * p * (1.0 - p) * rates.q_s,
        n_d: windows * p * p * rates.q_ss,
        n_v: windows * (1.0 - p) * (1.0 - p) * rates.q_nn,
    }
}

/// Final key length with its signed contributions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KeyResult {
    /// Unclamped `N_f`.
    pub key_length: f64,
    /// `max(N_f, 0) / N`.
    pub rate: f64,
    /// Untagged (privacy-amplification-free) bits, `+n`.
    pub untagged_term: f64,
    /// Phase-error leakage, `-n H(e)`.
    pub phase_term: f64,
    /// Error-correction leakage, `-f sum N_i H(E_i)`.
    pub ec_term: f64,
    /// Finite-size constant, `-(log2(2/eps_cor) + 2 log2(1/(sqrt2 eps_PA eps_hat)))`.
    pub finite_penalty: f64,
}

impl KeyResult {
    pub fn from_terms(
        untagged_term: f64,
        phase_term: f64,
        ec_term: f64,
        finite_penalty: f64,
        total_pulses: f64,
    ) -> Self {
        let key_length = untagged_term + phase_term + ec_term + finite_penalty;
        Self {
            key_length,
            rate: key_length.max(0.0) / total_pulses,
            untagged_term,
            phase_term,
            ec_term,
            finite_penalty,
        }
    }

    /// Unclamped `N_f / N`.
    pub fn signed_rate(&self, total_pulses: f64) -> f64 {
        self.key_length / total_pulses
    }

    pub fn zero(total_pulses: f64) -> Self {
        Self::from_terms(0.0, 0.0, 0.0, 0.0, total_pulses)
    }
}

/// `N_f = n_1 (+ n_0) - n_1 H(e_1) - f n_t H(E_Z)`.
pub fn key_length_original(
    counts: &ZWindowCounts,
    untagged: &UntaggedStats,
    f: f64,
    vacuum_credit: bool,
    total_pulses: f64,
) -> Result<KeyResult> {
    let credit = if vacuum_credit { untagged.n0 } else { 0.0 };
    Ok(KeyResult::from_terms(
        untagged.n1 + credit,
        -weighted_entropy(untagged.n1, untagged.e1ph)?,
        -f * weighted_entropy(counts.n_t(), counts.e_z())?,
        0.0,
        total_pulses,
    ))
}

/// `N_f = n_1 (+ n_0) - n_1 H(e_1) - f [N_0 H(E_0) + N_1 H(E_1)]`.
pub fn key_length_refined(
    counts: &ZWindowCounts,
    untagged: &UntaggedStats,
    f: f64,
    vacuum_credit: bool,
    total_pulses: f64,
) -> Result<KeyResult> {
    let credit = if vacuum_credit { untagged.n0 } else { 0.0 };
    let ec =
        weighted_entropy(counts.group0(), counts.e_group0())? + weighted_entropy(counts.group1(), counts.e_group1())?;
    Ok(KeyResult::from_terms(
        untagged.n1 + credit,
        -weighted_entropy(untagged.n1, untagged.e1ph)?,
        -f * ec,
        0.0,
        total_pulses,
    ))
}

/// The phase-flip iteration `e -> 2 e (1 - e)` of one parity-check round.
pub fn iterate_phase_error(e: f64) -> f64 {
    2.0 * e * (1.0 - e)
}

/// Ordered pair counts indexed by `[first label][second label]`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PairTable(pub [[f64; 4]; 4]);

impl PairTable {
    pub fn get(&self, a: Label, b: Label) -> f64 {
        self.0[a.index()][b.index()]
    }

    pub fn add(&mut self, a: Label, b: Label, v: f64) {
        self.0[a.index()][b.index()] += v;
    }

    /// Pair count with `C0`/`C1` merged into `C` on either side.
    pub fn merged(&self, a: MergedLabel, b: MergedLabel) -> f64 {
        let mut total = 0.0;
        for &x in a.members() {
            for &y in b.members() {
                total += self.get(x, y);
            }
        }
        total
    }

    pub fn total(&self) -> f64 {
        self.0.iter().flatten().sum()
    }
}

/// `C` (either one-sender label), `D` or `V`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MergedLabel {
    C,
    D,
    V,
}

impl MergedLabel {
    pub const ALL: [MergedLabel; 3] = [MergedLabel::C, MergedLabel::D, MergedLabel::V];

    pub fn members(self) -> &'static [Label] {
        match self {
            MergedLabel::C => &[Label::C0, Label::C1],
            MergedLabel::D => &[Label::D],
            MergedLabel::V => &[Label::V],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            MergedLabel::C => "C",
            MergedLabel::D => "D",
            MergedLabel::V => "V",
        }
    }
}

/// Survivor class after bit-flip error rejection.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ClassStats {
    pub count: f64,
    pub errors: f64,
}

impl ClassStats {
    pub fn error_rate(&self) -> f64 {
        ratio(self.errors, self.count)
    }
}

/// Expected outcome of random pairing with parity comparison.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BferOutcome {
    pub pairs: PairTable,
    /// `n~_t`, bits kept after rejection.
    pub survivors: f64,
    /// Class 1 (odd-parity pairs), class 2 (even, both Bob bits 0), class 3 (rest).
    pub classes: [ClassStats; 3],
    /// `n~_1`.
    pub n1_tilde: f64,
    /// `e~_1^ph`.
    pub e1ph_tilde: f64,
    pub n_t: f64,
}

pub fn bfer_expectations(counts: &ZWindowCounts, untagged: &UntaggedStats) -> Result<BferOutcome> {
    let n_t = counts.n_t();
    if !(n_t > 0.0) {
        return Err(Error::Degenerate(format!("random pairing needs n_t > 0, got {n_t}")));
    }
    let mut pairs = PairTable::default();
    for a in Label::ALL {
        for b in Label::ALL {
            pairs.add(a, b, 0.5 * n_t * (counts.get(a) / n_t) * (counts.get(b) / n_t));
        }
    }
    use Label::*;
    let n_cc = pairs.merged(MergedLabel::C, MergedLabel::C);
    let n_vd = pairs.get(V, D);
    let n_dv = pairs.get(D, V);
    let n_vv = pairs.get(V, V);
    let n_dd = pairs.get(D, D);
    let survivors = n_cc + n_vd + n_dv + n_vv + n_dd;
    let classes = [
        ClassStats {
            count: n_vd + n_dv + pairs.get(C1, C0) + pairs.get(C0, C1),
            errors: n_vd + n_dv,
        },
        ClassStats {
            count: n_dd + pairs.get(C0, C0),
            errors: n_dd,
        },
        ClassStats {
            count: n_vv + pairs.get(C1, C1),
            errors: n_vv,
        },
    ];
    Ok(BferOutcome {
        pairs,
        survivors,
        classes,
        n1_tilde: 0.5 * n_t * (untagged.n1 / n_t).powi(2),
        e1ph_tilde: iterate_phase_error(untagged.e1ph),
        n_t,
    })
}

fn class_leakage(bfer: &BferOutcome) -> Result<f64> {
    let mut total = 0.0;
    for c in &bfer.classes {
        total += weighted_entropy(c.count, c.error_rate())?;
    }
    Ok(total)
}

/// `N_f = n~_1 [1 - H(e~_1)] - f [n_t1 H(E_1) + n_t2 H(E_2) + n_t3 H(E_3)]`.
pub fn key_length_bfer(bfer: &BferOutcome, f: f64, total_pulses: f64) -> Result<KeyResult> {
    Ok(KeyResult::from_terms(
        bfer.n1_tilde,
        -weighted_entropy(bfer.n1_tilde, bfer.e1ph_tilde)?,
        -f * class_leakage(bfer)?,
        0.0,
        total_pulses,
    ))
}

/// Finite-size key length after error rejection. The untagged survivors and
/// their phase error are replaced by Chernoff bounds on the expected values;
/// the class counts enter as observed.
pub fn key_length_finite(
    bfer: &BferOutcome,
    expected: &UntaggedStats,
    budget: &crate::chernoff::EpsilonBudget,
    f: f64,
    total_pulses: f64,
) -> Result<(KeyResult, crate::chernoff::PostRejectionBounds)> {
    let n_t = bfer.n_t;
    let expected_n1_tilde = 0.5 * n_t * (expected.expected_n1 / n_t).powi(2);
    let bounds = crate::chernoff::post_rejection_bounds(expected_n1_tilde, expected.expected_e1ph, budget.xi)?;
    let key = KeyResult::from_terms(
        bounds.n1_lower,
        -weighted_entropy(bounds.n1_lower, bounds.e1ph_upper)?,
        -f * class_leakage(bfer)?,
        -budget.key_penalty(),
        total_pulses,
    );
    Ok((key, bounds))
}

/// Odd-parity sifting after random pairing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OddSiftOutcome {
    /// `N_R = N_1 N_0 / (N_1 + N_0)`.
    pub n_r: f64,
    /// `n'_1`.
    pub n1_prime: f64,
    /// `e'_odd`.
    pub e_odd: f64,
    /// Class-1 survivors `n_t1` and their error rate `E_1`.
    pub class1: ClassStats,
}

pub fn odd_parity_sift(counts: &ZWindowCounts, untagged: &UntaggedStats) -> Result<OddSiftOutcome> {
    let (n0, n1) = (counts.group0(), counts.group1());
    if !(n0 > 0.0 && n1 > 0.0) {
        return Err(Error::Degenerate(format!(
            "odd-parity sifting needs N_0, N_1 > 0, got {n0}, {n1}"
        )));
    }
    let n_t = counts.n_t();
    let bfer = bfer_expectations(counts, untagged)?;
    let cross = untagged.n1_1 * untagged.n1_0 / (n_t * n_t);
    Ok(OddSiftOutcome {
        n_r: n1 * n0 / (n1 + n0),
        n1_prime: 0.5 * n_t * (cross + cross),
        e_odd: iterate_phase_error(untagged.e1ph),
        class1: bfer.classes[0],
    })
}

/// `N_f = n'_1 [1 - H(e'_odd)] - f n_t1 H(E_1)`.
pub fn key_length_odd_sift(odd: &OddSiftOutcome, f: f64, total_pulses: f64) -> Result<KeyResult> {
    Ok(KeyResult::from_terms(
        odd.n1_prime,
        -weighted_entropy(odd.n1_prime, odd.e_odd)?,
        -f * weighted_entropy(odd.class1.count, odd.class1.error_rate())?,
        0.0,
        total_pulses,
    ))
}

/// Actively odd-parity pairing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AoppOutcome {
    /// Odd-parity pairs random pairing would give, `N_R`.
    pub n_r: f64,
    /// `N_A = min(N_0, N_1)`.
    pub n_a: f64,
    /// `N_{C1C0+C0C1}`.
    pub n_cc: f64,
    /// `N_{VD+DV}`.
    pub n_vd: f64,
    /// `N~_t`.
    pub survivors: f64,
    /// `E''_Z`.
    pub e_z: f64,
    /// `n''_1`.
    pub n1_pp: f64,
    /// `e''_1^ph`.
    pub e1ph_pp: f64,
}

pub fn aopp(counts: &ZWindowCounts, untagged: &UntaggedStats) -> Result<AoppOutcome> {
    let (g0, g1) = (counts.group0(), counts.group1());
    let n_a = g0.min(g1);
    if !(n_a > 0.0) {
        return Err(Error::Degenerate(format!("AOPP needs N_0, N_1 > 0, got {g0}, {g1}")));
    }
    let n_cc = (counts.n_c1 / g1) * (counts.n_c0 / g0) * n_a;
    let n_vd = (counts.n_v / g1) * (counts.n_d / g0) * n_a;
    let survivors = n_cc + n_vd;
    Ok(AoppOutcome {
        n_r: g1 * g0 / (g1 + g0),
        n_a,
        n_cc,
        n_vd,
        survivors,
        e_z: ratio(n_vd, survivors),
        n1_pp: (untagged.n1_0 / g0) * (untagged.n1_1 / g1) * n_a,
        e1ph_pp: iterate_phase_error(untagged.e1ph),
    })
}

/// `N_f = n''_1 [1 - H(e''_1)] - f N~_t H(E''_Z)`.
pub fn key_length_aopp(out: &AoppOutcome, f: f64, total_pulses: f64) -> Result<KeyResult> {
    Ok(KeyResult::from_terms(
        out.n1_pp,
        -weighted_entropy(out.n1_pp, out.e1ph_pp)?,
        -f * weighted_entropy(out.survivors, out.e_z)?,
        0.0,
        total_pulses,
    ))
}
