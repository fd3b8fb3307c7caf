//! Named parameter collections and the central-difference gradient check.

use std::collections::BTreeMap;
use std::fmt;

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

/// Parameters (or their gradients) keyed by name. Iteration is in sorted
/// name order, which fixes the order of every reduction over parameters.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamSet<T> {
    map: BTreeMap<String, Tensor<T>>,
}

impl<T: Scalar> ParamSet<T> {
    pub fn new() -> Self {
        Self {
            map: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, name: impl Into<String>, t: Tensor<T>) -> Result<()> {
        let name = name.into();
        if self.map.contains_key(&name) {
            return Err(Error::Config(format!("duplicate parameter `{name}`")));
        }
        self.map.insert(name, t);
        Ok(())
    }

    /// Inserts or overwrites.
    pub fn put(&mut self, name: impl Into<String>, t: Tensor<T>) {
        self.map.insert(name.into(), t);
    }

    pub fn get(&self, name: &str) -> Result<&Tensor<T>> {
        self.map
            .get(name)
            .ok_or_else(|| Error::State(format!("no parameter named `{name}`")))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Tensor<T>> {
        self.map
            .get_mut(name)
            .ok_or_else(|| Error::State(format!("no parameter named `{name}`")))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.map.contains_key(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.map.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor<T>)> {
        self.map.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.map.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn num_elements(&self) -> usize {
        self.map.values().map(Tensor::len).sum()
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            map: self
                .map
                .iter()
                .map(|(k, v)| (k.clone(), Tensor::zeros(v.shape())))
                .collect(),
        }
    }

    /// `self += alpha * other`, matched by name.
    pub fn axpy(&mut self, alpha: T, other: &Self) -> Result<()> {
        for (name, t) in &other.map {
            self.get_mut(name)?.axpy(alpha, t)?;
        }
        Ok(())
    }

    pub fn scale(&mut self, s: T) {
        for t in self.map.values_mut() {
            for x in t.data_mut() {
                *x = *x * s;
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.map.values().all(Tensor::is_finite)
    }

    pub fn same_layout(&self, other: &Self) -> bool {
        self.map.len() == other.map.len()
            && self
                .map
                .iter()
                .zip(&other.map)
                .all(|((a, x), (b, y))| a == b && x.shape() == y.shape())
    }

    pub fn cast<U: Scalar>(&self) -> ParamSet<U> {
        ParamSet {
            map: self.map.iter().map(|(k, v)| (k.clone(), v.cast())).collect(),
        }
    }
}

/// Denominator floor of the relative error.
pub const REL_FLOOR: f64 = 1e-8;
pub const DEFAULT_FD_STEP: f64 = 1e-5;
pub const DEFAULT_FD_TOL: f64 = 1e-5;

pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(REL_FLOOR)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FdEntry {
    pub name: String,
    pub max_rel_err: f64,
    /// Flat index of the worst element.
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FdReport {
    pub entries: Vec<FdEntry>,
    pub tolerance: f64,
}

impl FdReport {
    pub fn passed(&self) -> bool {
        self.entries.iter().all(|e| e.max_rel_err < self.tolerance)
    }

    pub fn max_rel_err(&self) -> f64 {
        self.entries.iter().map(|e| e.max_rel_err).fold(0.0, f64::max)
    }
}

impl fmt::Display for FdReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for e in &self.entries {
            let verdict = if e.max_rel_err < self.tolerance { "PASS" } else { "FAIL" };
            writeln!(
                f,
                "{:<16} max_rel_err={:.3e} (at {}: analytic={:.6e} numeric={:.6e}) {verdict}",
                e.name, e.max_rel_err, e.worst_index, e.analytic, e.numeric
            )?;
        }
        write!(
            f,
            "{} (tolerance {:.1e})",
            if self.passed() { "PASS" } else { "FAIL" },
            self.tolerance
        )
    }
}

/// Compares `analytic` against central differences of `f` around `params`.
///
/// Every element of every parameter is perturbed by `±h`; the relative
/// error uses a `max(|a|, |b|, 1e-8)` denominator.
pub fn fd_check<T, F>(
    mut f: F,
    params: &ParamSet<T>,
    analytic: &ParamSet<T>,
    h: f64,
    tolerance: f64,
) -> Result<FdReport>
where
    T: Scalar,
    F: FnMut(&ParamSet<T>) -> Result<T>,
{
    fd_check_terms(|p| Ok(vec![f(p)?]), params, analytic, h, tolerance)
}

/// [`fd_check`] for an objective given as a sum of terms.
///
/// Each term is differenced on its own and the differences are summed.
/// This is the same central difference, but a small term (weight decay on a
/// parameter with no data gradient, say) is no longer rounded away inside
/// a much larger total.
pub fn fd_check_terms<T, F>(
    mut f: F,
    params: &ParamSet<T>,
    analytic: &ParamSet<T>,
    h: f64,
    tolerance: f64,
) -> Result<FdReport>
where
    T: Scalar,
    F: FnMut(&ParamSet<T>) -> Result<Vec<T>>,
{
    let mut reports = fd_check_split(|p| Ok(vec![f(p)?]), params, std::slice::from_ref(analytic), h, tolerance)?;
    Ok(reports.remove(0))
}

/// Checks several objectives at once, one report per group.
///
/// `f` returns one list of terms per group and `analytic[g]` is the gradient
/// of group `g` alone. Each perturbation is evaluated once and shared by all
/// groups. Checking terms separately keeps one term's gradient from being
/// judged only through its sum with another that nearly cancels it.
pub fn fd_check_split<T, F>(
    mut f: F,
    params: &ParamSet<T>,
    analytic: &[ParamSet<T>],
    h: f64,
    tolerance: f64,
) -> Result<Vec<FdReport>>
where
    T: Scalar,
    F: FnMut(&ParamSet<T>) -> Result<Vec<Vec<T>>>,
{
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::Numerical(format!("finite-difference step must be > 0, got {h}")));
    }
    let mut probe = params.clone();
    let mut entries: Vec<Vec<FdEntry>> = vec![Vec::with_capacity(params.len()); analytic.len()];
    for (name, t) in params.iter() {
        let grads = analytic.iter().map(|g| g.get(name)).collect::<Result<Vec<_>>>()?;
        for grad in &grads {
            if grad.shape() != t.shape() {
                return Err(Error::Shape(format!(
                    "gradient of `{name}` has shape {:?}, parameter {:?}",
                    grad.shape(),
                    t.shape()
                )));
            }
        }
        let mut group_entries: Vec<FdEntry> = (0..grads.len())
            .map(|_| FdEntry { name: name.to_string(), max_rel_err: 0.0, worst_index: 0, analytic: 0.0, numeric: 0.0 })
            .collect();
        for i in 0..t.len() {
            let orig = t.data()[i];
            let mut eval = |x: T| -> Result<Vec<Vec<f64>>> {
                probe.get_mut(name)?.data_mut()[i] = x;
                let v: Vec<Vec<f64>> = f(&probe)?
                    .into_iter()
                    .map(|g| g.into_iter().map(|t| t.to_f64_lossy()).collect())
                    .collect();
                if !v.iter().flatten().all(|t| t.is_finite()) {
                    return Err(Error::Numerical(format!(
                        "objective is not finite while perturbing `{name}`[{i}]"
                    )));
                }
                Ok(v)
            };
            let plus = eval(orig + T::of(h))?;
            let minus = eval(orig - T::of(h))?;
            probe.get_mut(name)?.data_mut()[i] = orig;
            if plus.len() != grads.len() || minus.len() != grads.len() {
                return Err(Error::Numerical(format!(
                    "objective returned {} groups, expected {}",
                    plus.len().max(minus.len()),
                    grads.len()
                )));
            }
            for (g, entry) in group_entries.iter_mut().enumerate() {
                if plus[g].len() != minus[g].len() {
                    return Err(Error::Numerical("objective changed its number of terms".into()));
                }
                let diff: f64 = plus[g].iter().zip(&minus[g]).map(|(p, m)| p - m).sum();
                let numeric = diff / (2.0 * h);
                let a = grads[g].data()[i].to_f64_lossy();
                let err = relative_error(a, numeric);
                if err > entry.max_rel_err || i == 0 {
                    entry.max_rel_err = err;
                    entry.worst_index = i;
                    entry.analytic = a;
                    entry.numeric = numeric;
                }
            }
        }
        for (g, e) in group_entries.into_iter().enumerate() {
            entries[g].push(e);
        }
    }
    Ok(entries.into_iter().map(|entries| FdReport { entries, tolerance }).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic() {
        let mut p = ParamSet::<f64>::new();
        p.insert("w", Tensor::new(vec![2], vec![1.0, 2.0]).unwrap()).unwrap();
        let mut g = ParamSet::new();
        g.insert("w", Tensor::new(vec![2], vec![2.0, 4.0]).unwrap()).unwrap();
        let report = fd_check(|q| Ok(q.get("w")?.sq_norm()), &p, &g, 1e-5, 1e-9).unwrap();
        assert!(report.passed(), "{report}");
        assert!(report.max_rel_err() < 1e-9);
    }

    #[test]
    fn zero_step_is_rejected() {
        let mut p = ParamSet::<f64>::new();
        p.insert("w", Tensor::zeros(&[1])).unwrap();
        let g = p.clone();
        let r = fd_check(|q| Ok(q.get("w")?.sum()), &p, &g, 0.0, 1e-5);
        assert!(matches!(r, Err(Error::Numerical(_))));
    }

    #[test]
    fn non_finite_objective_is_rejected() {
        let mut p = ParamSet::<f64>::new();
        p.insert("w", Tensor::zeros(&[1])).unwrap();
        let g = p.clone();
        let r = fd_check(|_| Ok(f64::NAN), &p, &g, 1e-5, 1e-5);
        assert!(matches!(r, Err(Error::Numerical(_))));
    }

    #[test]
    fn wrong_gradient_fails() {
        let mut p = ParamSet::<f64>::new();
        p.insert("w", Tensor::new(vec![2], vec![1.0, 2.0]).unwrap()).unwrap();
        let mut g = ParamSet::new();
        g.insert("w", Tensor::new(vec![2], vec![2.0, 4.5]).unwrap()).unwrap();
        let report = fd_check(|q| Ok(q.get("w")?.sq_norm()), &p, &g, 1e-5, 1e-5).unwrap();
        assert!(!report.passed());
        assert_eq!(report.entries[0].worst_index, 1);
        assert!(report.to_string().contains("FAIL"));
    }

    #[test]
    fn split_checks_each_group_against_its_own_gradient() {
        // f = [w0²] and [3·w1]; the second analytic gradient is wrong in w0
        let mut p = ParamSet::<f64>::new();
        p.insert("w", Tensor::new(vec![2], vec![1.5, -2.0]).unwrap()).unwrap();
        let mut g0 = ParamSet::new();
        g0.insert("w", Tensor::new(vec![2], vec![3.0, 0.0]).unwrap()).unwrap();
        let mut g1 = ParamSet::new();
        g1.insert("w", Tensor::new(vec![2], vec![1.0, 3.0]).unwrap()).unwrap();
        let f = |q: &ParamSet<f64>| {
            let w = q.get("w")?.data();
            Ok(vec![vec![w[0] * w[0]], vec![3.0 * w[1]]])
        };
        let reports = fd_check_split(f, &p, &[g0, g1], 1e-5, 1e-6).unwrap();
        assert_eq!(reports.len(), 2);
        assert!(reports[0].passed(), "{}", reports[0]);
        assert!(!reports[1].passed());
        assert_eq!(reports[1].entries[0].worst_index, 0);
    }

    #[test]
    fn split_rejects_a_group_count_mismatch() {
        let mut p = ParamSet::<f64>::new();
        p.insert("w", Tensor::zeros(&[1])).unwrap();
        let g = p.clone();
        let r = fd_check_split(|_| Ok(vec![vec![0.0]]), &p, &[g.clone(), g], 1e-5, 1e-5);
        assert!(matches!(r, Err(Error::Numerical(_))));
    }

    #[test]
    fn duplicate_names_rejected_and_order_sorted() {
        let mut p = ParamSet::<f32>::new();
        p.insert("b", Tensor::zeros(&[1])).unwrap();
        p.insert("a", Tensor::zeros(&[2])).unwrap();
        assert!(p.insert("a", Tensor::zeros(&[2])).is_err());
        assert_eq!(p.names().collect::<Vec<_>>(), vec!["a", "b"]);
        assert_eq!(p.num_elements(), 3);
    }
}
