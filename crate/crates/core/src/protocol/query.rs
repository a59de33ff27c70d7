//! Pure pieces of query-time extraction.

use serde::{Deserialize, Serialize};

/// Index maximizing `m_i / max(k, n_i)`; ties go to the smallest index.
/// Returns `None` for an empty family.
pub fn select_level(records: &[(f64, f64)], k: usize) -> Option<usize> {
    let score = |&(m, n): &(f64, f64)| m / (k as f64).max(n);
    let mut best: Option<(usize, f64)> = None;
    for (i, r) in records.iter().enumerate() {
        let s = score(r);
        if best.is_none_or(|(_, b)| s > b) {
            best = Some((i, s));
        }
    }
    best.map(|b| b.0)
}

/// Deficit `Δ = (1+δ)k − n_i`, or `None` when no padding is needed
/// (`k = 0` or `n_i ≥ (1+δ)k`).
pub fn padding_deficit(k: usize, n_i: f64, delta: f64) -> Option<f64> {
    let target = (1.0 + delta) * k as f64;
    (k > 0 && n_i < target).then_some(target - n_i)
}

/// Accepted range for the estimated padding size `Δ'`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AcceptanceWindow {
    pub lo: f64,
    pub hi: f64,
}

impl AcceptanceWindow {
    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    pub fn center(&self) -> f64 {
        (self.lo + self.hi) / 2.0
    }
}

/// `[(1+δ)Δ, (1+2δ)Δ]`. With exact counts the window is restricted to
/// integers and widened to contain at least `⌈(1+δ)Δ⌉`.
pub fn acceptance_window(deficit: f64, delta: f64, exact: bool) -> AcceptanceWindow {
    let lo = (1.0 + delta) * deficit;
    let hi = (1.0 + 2.0 * delta) * deficit;
    if exact {
        let lo = lo.ceil();
        AcceptanceWindow { lo, hi: hi.floor().max(lo) }
    } else {
        AcceptanceWindow { lo, hi }
    }
}

/// Enrollment probability for a node outside `V_i`, chosen so that the
/// expected padding size sits at the center of the acceptance window.
pub fn coin_probability(window: &AcceptanceWindow, n_0: f64, n_i: f64) -> f64 {
    let outside = n_0 - n_i;
    if outside <= 0.0 {
        return 1.0;
    }
    (window.center() / outside).clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn level_selection_examples() {
        assert_eq!(select_level(&[(4.0, 4.0), (3.0, 3.0)], 5), Some(0));
        assert_eq!(select_level(&[(6.0, 4.0), (5.0, 3.0)], 0), Some(1));
        assert_eq!(select_level(&[(2.0, 2.0), (1.0, 1.0)], 0), Some(0), "ties go to the smallest index");
        assert_eq!(select_level(&[], 3), None);
    }

    #[test]
    fn deficit_examples() {
        assert_eq!(padding_deficit(100, 50.0, 0.01), Some(101.0 - 50.0));
        assert_eq!(padding_deficit(100, 101.0, 0.01), None);
        assert_eq!(padding_deficit(0, 3.0, 0.01), None);
    }

    #[test]
    fn integer_window() {
        let w = acceptance_window(51.0, 0.01, true);
        assert_eq!((w.lo, w.hi), (52.0, 52.0));
        // (1.01·10, 1.02·10) = (10.1, 10.2) holds no integer: widened to {11}.
        let w = acceptance_window(10.0, 0.01, true);
        assert_eq!((w.lo, w.hi), (11.0, 11.0));
        let w = acceptance_window(10.0, 0.01, false);
        assert!(w.contains(10.15) && !w.contains(10.3));
    }

    #[test]
    fn coin_is_centered() {
        let w = acceptance_window(51.0, 0.01, false);
        let p = coin_probability(&w, 200.0, 50.0);
        assert!((p * 150.0 - w.center()).abs() < 1e-9);
        assert_eq!(coin_probability(&w, 50.0, 50.0), 1.0);
    }
}
