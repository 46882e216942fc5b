//! Substate decomposition of a node's initial value.
//!
//! Each node splits its initial value `y0` into `dmax + 2` integer
//! substates whose mean is exactly `y0`, all carried with unit weight. A
//! private node picks substates that are pairwise distinct and all differ
//! from `y0`; neutral and curious nodes use `y0` for every substate.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use rand::seq::index::sample;
use rand::Rng;
use thiserror::Error;

/// Retries for the private decomposition before giving up.
pub const DECOMPOSITION_RETRY_BUDGET: usize = 10_000;

/// Default half-width of the window private substates are drawn from.
pub const DEFAULT_OFFSET_BOUND: i64 = 100;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum NodeRole {
    /// Wants its initial value kept secret.
    Private,
    /// Honest-but-curious: follows the protocol, shares everything it sees
    /// with the other curious nodes.
    Curious,
    /// Neither protects nor attacks.
    Neutral,
}

impl NodeRole {
    pub fn is_private(self) -> bool {
        self == NodeRole::Private
    }
}

impl fmt::Display for NodeRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NodeRole::Private => "private",
            NodeRole::Curious => "curious",
            NodeRole::Neutral => "neutral",
        })
    }
}

impl FromStr for NodeRole {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "p" | "private" => Ok(NodeRole::Private),
            "c" | "curious" => Ok(NodeRole::Curious),
            "n" | "neutral" => Ok(NodeRole::Neutral),
            other => Err(format!("unknown role {other:?}")),
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ScheduleError {
    #[error("max out-degree must be at least 1")]
    ZeroDegree,
    #[error("offset bound {bound} admits no {count} distinct substates around {y0} with the required mean")]
    Infeasible { y0: i64, count: usize, bound: i64 },
    #[error("no valid private decomposition of {y0} after {budget} draws")]
    RetriesExhausted { y0: i64, budget: usize },
    #[error("integer overflow while decomposing {0}")]
    Overflow(i64),
    #[error("schedule violates its constraints: {0:?}")]
    Invalid(Vec<Violation>),
}

/// The privacy variables of one node: `uy[s]`, `uz[s]` for
/// `s in 0..=dmax+1`. Entries beyond that range are zero.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct SubstateSchedule {
    pub y0: i64,
    pub uy: Vec<i64>,
    pub uz: Vec<i64>,
}

impl SubstateSchedule {
    /// Schedule of a node that does not hide its value.
    pub fn public(y0: i64, dmax: usize) -> Self {
        let len = dmax + 2;
        Self {
            y0,
            uy: vec![y0; len],
            uz: vec![1; len],
        }
    }

    /// Private-style schedule from explicit substates.
    pub fn from_substates(y0: i64, uy: Vec<i64>) -> Self {
        let uz = vec![1; uy.len()];
        Self { y0, uy, uz }
    }

    /// Number of stored substates (`dmax + 2` for a well-formed schedule).
    pub fn len(&self) -> usize {
        self.uy.len()
    }

    pub fn is_empty(&self) -> bool {
        self.uy.is_empty()
    }

    /// `u^y[s]`, zero past the end.
    pub fn uy_at(&self, s: usize) -> i64 {
        self.uy.get(s).copied().unwrap_or(0)
    }

    /// `u^z[s]`, zero past the end.
    pub fn uz_at(&self, s: usize) -> i64 {
        self.uz.get(s).copied().unwrap_or(0)
    }

    /// Sum of the `y` substates not yet injected when the counter is at `s`.
    pub fn pending_y(&self, s: usize) -> i64 {
        self.uy.iter().skip(s).sum()
    }

    /// Sum of the `z` substates not yet injected when the counter is at `s`.
    pub fn pending_z(&self, s: usize) -> i64 {
        self.uz.iter().skip(s).sum()
    }

    /// Mean of the `y` substates, if it is an integer.
    pub fn implied_initial(&self) -> Option<i64> {
        let sum: i64 = self.uy.iter().sum();
        let len = self.uy.len() as i64;
        (len > 0 && sum % len == 0).then(|| sum / len)
    }
}

/// One broken constraint found by [`validate_schedule`].
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Violation {
    /// Wrong number of `y` or `z` entries for the network's max out-degree.
    Length { expected: usize, uy: usize, uz: usize },
    /// Two private substates coincide.
    DistinctSubstates { first: usize, second: usize, value: i64 },
    /// A private substate reveals the initial value.
    SubstateEqualsInitial { index: usize },
    /// A `z` substate in range is not 1.
    UnitWeight { index: usize, value: i64 },
    /// The `y` substates do not sum to `(dmax + 2) * y0`.
    SumMismatch { expected: i64, found: i64 },
    /// A non-private node uses a substate other than its initial value.
    PublicSubstate { index: usize, value: i64 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Length { expected, uy, uz } => {
                write!(f, "length: expected {expected} substates, got uy={uy} uz={uz}")
            }
            Violation::DistinctSubstates { first, second, value } => {
                write!(f, "distinct: uy[{first}] == uy[{second}] == {value}")
            }
            Violation::SubstateEqualsInitial { index } => {
                write!(f, "hides-initial: uy[{index}] equals y0")
            }
            Violation::UnitWeight { index, value } => write!(f, "unit-weight: uz[{index}] = {value}"),
            Violation::SumMismatch { expected, found } => {
                write!(f, "sum: expected {expected}, found {found}")
            }
            Violation::PublicSubstate { index, value } => {
                write!(f, "public: uy[{index}] = {value} differs from y0")
            }
        }
    }
}

/// Checks a schedule against the constraints that apply to `role`. Returns
/// every violation found; an empty list means the schedule is valid.
pub fn validate_schedule(s: &SubstateSchedule, dmax: usize, role: NodeRole) -> Vec<Violation> {
    let mut out = Vec::new();
    let expected = dmax + 2;
    if s.uy.len() != expected || s.uz.len() != expected {
        out.push(Violation::Length {
            expected,
            uy: s.uy.len(),
            uz: s.uz.len(),
        });
    }
    for (index, &value) in s.uz.iter().enumerate() {
        if value != 1 {
            out.push(Violation::UnitWeight { index, value });
        }
    }
    let found = s.uy.iter().fold(0i128, |a, &v| a + v as i128);
    let target = expected as i128 * s.y0 as i128;
    if found != target {
        out.push(Violation::SumMismatch {
            expected: clamp_i64(target),
            found: clamp_i64(found),
        });
    }
    if role.is_private() {
        for (i, &a) in s.uy.iter().enumerate() {
            if a == s.y0 {
                out.push(Violation::SubstateEqualsInitial { index: i });
            }
            for (j, &b) in s.uy.iter().enumerate().skip(i + 1) {
                if a == b {
                    out.push(Violation::DistinctSubstates {
                        first: i,
                        second: j,
                        value: a,
                    });
                }
            }
        }
    } else {
        for (index, &value) in s.uy.iter().enumerate() {
            if value != s.y0 {
                out.push(Violation::PublicSubstate { index, value });
            }
        }
    }
    out
}

fn clamp_i64(v: i128) -> i64 {
    v.clamp(i64::MIN as i128, i64::MAX as i128) as i64
}

/// Smallest offset bound for which `count` distinct nonzero offsets in
/// `[-bound, bound]` can sum to zero.
pub fn min_feasible_offset_bound(count: usize) -> i64 {
    let k = count as i64;
    if k % 2 == 0 {
        k / 2
    } else {
        (k + 3) / 2
    }
}

/// Splits `y0` into `dmax + 2` substates appropriate for `role`.
///
/// Private substates are drawn from `[y0 - offset_bound, y0 + offset_bound]`:
/// the first `dmax + 1` are distinct values sampled uniformly (excluding
/// `y0`) and the last is forced so the mean is `y0`. A draw whose forced
/// entry collides, equals `y0`, or leaves the window is discarded.
pub fn decompose_initial_state<R: Rng + ?Sized>(
    y0: i64,
    dmax: usize,
    role: NodeRole,
    offset_bound: i64,
    rng: &mut R,
) -> Result<SubstateSchedule, ScheduleError> {
    if dmax == 0 {
        return Err(ScheduleError::ZeroDegree);
    }
    if !role.is_private() {
        return Ok(SubstateSchedule::public(y0, dmax));
    }
    let count = dmax + 2;
    if offset_bound < min_feasible_offset_bound(count) {
        return Err(ScheduleError::Infeasible {
            y0,
            count,
            bound: offset_bound,
        });
    }
    let total = (count as i64).checked_mul(y0).ok_or(ScheduleError::Overflow(y0))?;
    y0.checked_sub(offset_bound)
        .and(y0.checked_add(offset_bound))
        .ok_or(ScheduleError::Overflow(y0))?;

    // Nonzero offsets -b..=-1, 1..=b indexed 0..2b.
    let slots = 2 * offset_bound as usize;
    let offset_of = |i: usize| -> i64 {
        let i = i as i64;
        if i < offset_bound {
            i - offset_bound
        } else {
            i - offset_bound + 1
        }
    };
    for _ in 0..DECOMPOSITION_RETRY_BUDGET {
        let picks = sample(rng, slots, count - 1);
        let offsets: Vec<i64> = picks.iter().map(offset_of).collect();
        let last = -offsets.iter().sum::<i64>();
        if last == 0 || last.abs() > offset_bound || offsets.contains(&last) {
            continue;
        }
        let mut uy: Vec<i64> = offsets.iter().map(|o| y0 + o).collect();
        uy.push(y0 + last);
        debug_assert_eq!(uy.iter().sum::<i64>(), total);
        debug_assert_eq!(uy.iter().collect::<HashSet<_>>().len(), count);
        return Ok(SubstateSchedule::from_substates(y0, uy));
    }
    Err(ScheduleError::RetriesExhausted {
        y0,
        budget: DECOMPOSITION_RETRY_BUDGET,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    // Exhaustive k-subsets; oracle for the feasibility formula.
    fn combinations(items: &[i64], k: usize) -> Vec<Vec<i64>> {
        if k == 0 {
            return vec![vec![]];
        }
        if items.len() < k {
            return vec![];
        }
        let mut out = Vec::new();
        for mut rest in combinations(&items[1..], k - 1) {
            rest.insert(0, items[0]);
            out.push(rest);
        }
        out.extend(combinations(&items[1..], k));
        out
    }

    #[test]
    fn feasibility_formula_matches_enumeration() {
        for k in 2..=7usize {
            for b in 1..=7i64 {
                let vals: Vec<i64> = (-b..=b).filter(|&v| v != 0).collect();
                let brute = combinations(&vals, k).iter().any(|c| c.iter().sum::<i64>() == 0);
                assert_eq!(brute, b >= min_feasible_offset_bound(k), "k={k} b={b}");
            }
        }
    }

    #[test]
    fn worked_example_is_valid() {
        let s = SubstateSchedule::from_substates(4, vec![1, 8, 6, 2, 3]);
        assert!(validate_schedule(&s, 3, NodeRole::Private).is_empty());
        assert_eq!(s.uz, vec![1; 5]);
    }

    #[test]
    fn neutral_schedule_is_constant() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let s = decompose_initial_state(7, 2, NodeRole::Neutral, 100, &mut rng).unwrap();
        assert_eq!(s.uy, vec![7, 7, 7, 7]);
        assert_eq!(s.uz, vec![1, 1, 1, 1]);
        assert!(validate_schedule(&s, 2, NodeRole::Neutral).is_empty());
        let c = decompose_initial_state(7, 2, NodeRole::Curious, 100, &mut rng).unwrap();
        assert_eq!(c, s);
    }

    #[test]
    fn negative_private_decomposition() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = decompose_initial_state(-5, 1, NodeRole::Private, 10, &mut rng).unwrap();
        assert!(validate_schedule(&s, 1, NodeRole::Private).is_empty());
        assert!(s.uy.iter().all(|&u| (-15..=5).contains(&u)));
    }

    #[test]
    fn all_equal_private_is_rejected() {
        let s = SubstateSchedule::from_substates(4, vec![4, 4, 4]);
        let v = validate_schedule(&s, 1, NodeRole::Private);
        assert!(v.contains(&Violation::SubstateEqualsInitial { index: 0 }));
        assert!(v.contains(&Violation::DistinctSubstates {
            first: 0,
            second: 1,
            value: 4
        }));
        assert!(!v.iter().any(|x| matches!(x, Violation::SumMismatch { .. })));
    }

    #[test]
    fn wrong_sum_is_rejected() {
        let s = SubstateSchedule::from_substates(4, vec![1, 8, 6, 2, 4]);
        let v = validate_schedule(&s, 3, NodeRole::Private);
        assert!(v.contains(&Violation::SumMismatch {
            expected: 20,
            found: 21
        }));
        // the trailing 4 also equals y0
        assert_eq!(v.len(), 2);
    }

    #[test]
    fn length_and_weight_violations() {
        let mut s = SubstateSchedule::from_substates(4, vec![1, 8, 6, 2, 3]);
        assert!(validate_schedule(&s, 2, NodeRole::Private)
            .iter()
            .any(|v| matches!(v, Violation::Length { expected: 4, .. })));
        s.uz[2] = 2;
        assert_eq!(
            validate_schedule(&s, 3, NodeRole::Private),
            vec![Violation::UnitWeight { index: 2, value: 2 }]
        );
        let public = SubstateSchedule::from_substates(4, vec![3, 5, 4]);
        assert_eq!(validate_schedule(&public, 1, NodeRole::Neutral).len(), 2);
    }

    #[test]
    fn infeasible_window_is_reported() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        // 3 substates need offsets like {1, 2, -3}.
        assert_eq!(
            decompose_initial_state(0, 1, NodeRole::Private, 2, &mut rng),
            Err(ScheduleError::Infeasible {
                y0: 0,
                count: 3,
                bound: 2
            })
        );
        assert!(decompose_initial_state(0, 1, NodeRole::Private, 3, &mut rng).is_ok());
        assert_eq!(
            decompose_initial_state(0, 0, NodeRole::Private, 3, &mut rng),
            Err(ScheduleError::ZeroDegree)
        );
    }

    #[test]
    fn decomposition_is_deterministic() {
        let a = decompose_initial_state(13, 6, NodeRole::Private, 100, &mut ChaCha8Rng::seed_from_u64(9));
        let b = decompose_initial_state(13, 6, NodeRole::Private, 100, &mut ChaCha8Rng::seed_from_u64(9));
        assert_eq!(a, b);
    }

    #[test]
    fn accessors_past_the_end() {
        let s = SubstateSchedule::from_substates(4, vec![1, 8, 6, 2, 3]);
        assert_eq!(s.uy_at(5), 0);
        assert_eq!(s.uz_at(5), 0);
        assert_eq!(s.uz_at(4), 1);
        assert_eq!(s.pending_y(1), 19);
        assert_eq!(s.pending_z(1), 4);
        assert_eq!(s.implied_initial(), Some(4));
    }

    proptest::proptest! {
        #[test]
        fn private_decompositions_validate(y0 in -100i64..=100, dmax in 1usize..=8, seed: u64) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let s = decompose_initial_state(y0, dmax, NodeRole::Private, DEFAULT_OFFSET_BOUND, &mut rng).unwrap();
            proptest::prop_assert!(validate_schedule(&s, dmax, NodeRole::Private).is_empty());
            proptest::prop_assert_eq!(s.uy.iter().sum::<i64>(), (dmax as i64 + 2) * y0);
            proptest::prop_assert!(s.uy.iter().all(|u| (u - y0).abs() <= DEFAULT_OFFSET_BOUND));
        }
    }
}
