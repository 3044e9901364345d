//! Weakly decomposable penalty norms: the ℓ1 norm and the weighted group
//! lasso norm Σ_j √|G_j|·‖β_{G_j}‖₂ over a disjoint partition.
//!
//! Every operation works on the penalized coordinates only. Unpenalized
//! coordinates (an intercept) are handled by the caller.

use alloc::vec;
use alloc::vec::Vec;

use ndarray::{Array1, ArrayView1, ArrayViewMut1};

use crate::error::{check_len, invalid, Error, Result};

/// A disjoint cover of `0..p` by non-empty groups, kept in caller order.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupPartition {
    groups: Vec<Vec<usize>>,
    membership: Vec<usize>,
}

impl GroupPartition {
    /// Builds a partition from 0-based index groups covering `0..p`.
    pub fn new(groups: Vec<Vec<usize>>, p: usize) -> Result<Self> {
        let mut membership = vec![usize::MAX; p];
        for (g, members) in groups.iter().enumerate() {
            if members.is_empty() {
                return Err(invalid(alloc::format!("group {} is empty", g + 1)));
            }
            for &i in members {
                if i >= p {
                    return Err(invalid(alloc::format!(
                        "group {} references index {} outside 1..={p}",
                        g + 1,
                        i + 1
                    )));
                }
                if membership[i] != usize::MAX {
                    return Err(invalid(alloc::format!(
                        "index {} appears in groups {} and {}",
                        i + 1,
                        membership[i] + 1,
                        g + 1
                    )));
                }
                membership[i] = g;
            }
        }
        if let Some(i) = membership.iter().position(|&g| g == usize::MAX) {
            return Err(invalid(alloc::format!("index {} is not covered by any group", i + 1)));
        }
        Ok(Self { groups, membership })
    }

    /// Same as [`GroupPartition::new`] but with 1-based indices, the
    /// convention of the configuration files.
    pub fn from_one_based(groups: &[Vec<usize>], p: usize) -> Result<Self> {
        let mut zero_based = Vec::with_capacity(groups.len());
        for (g, members) in groups.iter().enumerate() {
            let mut out = Vec::with_capacity(members.len());
            for &i in members {
                if i == 0 {
                    return Err(invalid(alloc::format!("group {} uses index 0; indices are 1-based", g + 1)));
                }
                out.push(i - 1);
            }
            zero_based.push(out);
        }
        Self::new(zero_based, p)
    }

    /// Consecutive blocks of the given sizes.
    pub fn contiguous(sizes: &[usize]) -> Result<Self> {
        let mut start = 0;
        let groups = sizes
            .iter()
            .map(|&len| {
                let g: Vec<usize> = (start..start + len).collect();
                start += len;
                g
            })
            .collect();
        Self::new(groups, start)
    }

    pub fn p(&self) -> usize {
        self.membership.len()
    }

    pub fn num_groups(&self) -> usize {
        self.groups.len()
    }

    pub fn groups(&self) -> &[Vec<usize>] {
        &self.groups
    }

    pub fn group_of(&self, index: usize) -> usize {
        self.membership[index]
    }

    /// The group weight √|G|.
    pub fn weight(&self, group: usize) -> f64 {
        libm::sqrt(self.groups[group].len() as f64)
    }

    /// Groups as 1-based index lists.
    pub fn to_one_based(&self) -> Vec<Vec<usize>> {
        self.groups.iter().map(|g| g.iter().map(|i| i + 1).collect()).collect()
    }

    fn with_leading_singletons(&self, k: usize) -> Self {
        let mut groups: Vec<Vec<usize>> = (0..k).map(|i| vec![i]).collect();
        groups.extend(self.groups.iter().map(|g| g.iter().map(|i| i + k).collect()));
        let mut membership: Vec<usize> = (0..k).collect();
        membership.extend(self.membership.iter().map(|g| g + k));
        Self { groups, membership }
    }

    fn without_index(&self, j: usize) -> Self {
        let shift = |i: usize| if i > j { i - 1 } else { i };
        let groups: Vec<Vec<usize>> = self
            .groups
            .iter()
            .map(|g| g.iter().copied().filter(|&i| i != j).map(shift).collect::<Vec<_>>())
            .filter(|g| !g.is_empty())
            .collect();
        let p = self.p() - 1;
        Self::new(groups, p).expect("removing one index keeps a valid partition")
    }
}

/// Which norm acts as the penalty.
#[derive(Debug, Clone, PartialEq)]
pub enum Norm {
    /// Σ|β_j| over `p` coordinates.
    L1 { p: usize },
    /// Σ_j √|G_j|·‖β_{G_j}‖₂.
    WeightedGroupLasso(GroupPartition),
}

/// The norm used in place of the penalty inside nodewise regressions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WeakNorm {
    #[default]
    L1,
    /// Reuse the penalty norm itself.
    SameAsPenalty,
}

impl Norm {
    pub fn p(&self) -> usize {
        match self {
            Norm::L1 { p } => *p,
            Norm::WeightedGroupLasso(part) => part.p(),
        }
    }

    /// Ω(β).
    pub fn value(&self, beta: ArrayView1<f64>) -> Result<f64> {
        check_len(self.p(), beta.len())?;
        Ok(self.value_unchecked(beta))
    }

    pub(crate) fn value_unchecked(&self, beta: ArrayView1<f64>) -> f64 {
        match self {
            Norm::L1 { .. } => beta.iter().map(|b| b.abs()).sum(),
            Norm::WeightedGroupLasso(part) => part
                .groups
                .iter()
                .map(|g| libm::sqrt(g.len() as f64) * group_l2(beta, g))
                .sum(),
        }
    }

    /// Ω_*(ω) = max over Ω(b) ≤ 1 of ω'b.
    pub fn dual(&self, omega: ArrayView1<f64>) -> Result<f64> {
        check_len(self.p(), omega.len())?;
        Ok(self.dual_unchecked(omega))
    }

    pub(crate) fn dual_unchecked(&self, omega: ArrayView1<f64>) -> f64 {
        match self {
            Norm::L1 { .. } => omega.iter().fold(0.0, |m, w| m.max(w.abs())),
            Norm::WeightedGroupLasso(part) => part
                .groups
                .iter()
                .map(|g| group_l2(omega, g) / libm::sqrt(g.len() as f64))
                .fold(0.0, f64::max),
        }
    }

    /// argmin_u ½‖u − v‖₂² + t·Ω(u).
    pub fn prox(&self, v: ArrayView1<f64>, t: f64) -> Result<Array1<f64>> {
        check_len(self.p(), v.len())?;
        if !(t >= 0.0) {
            return Err(invalid("prox threshold must be non-negative"));
        }
        let mut out = v.to_owned();
        self.prox_in_place(out.view_mut(), t);
        Ok(out)
    }

    pub(crate) fn prox_in_place(&self, mut v: ArrayViewMut1<f64>, t: f64) {
        if t == 0.0 {
            return;
        }
        match self {
            Norm::L1 { .. } => v.mapv_inplace(|x| soft_threshold(x, t)),
            Norm::WeightedGroupLasso(part) => {
                for g in &part.groups {
                    let norm = group_l2(v.view(), g);
                    let thresh = t * libm::sqrt(g.len() as f64);
                    // a zero block stays zero
                    let scale = if norm > thresh { 1.0 - thresh / norm } else { 0.0 };
                    for &i in g {
                        v[i] *= scale;
                    }
                }
            }
        }
    }

    /// Ω(β) − [Ω(β_S) + Ω^{S^c}(β_{S^c})] with Ω^{S^c} the restriction of Ω
    /// to the complement. Zero (up to rounding) for the decomposable norms.
    pub fn decomposition_gap(&self, beta: ArrayView1<f64>, set: &AllowedSet) -> Result<f64> {
        check_len(self.p(), beta.len())?;
        set.check_for(self)?;
        let mut inside = Array1::zeros(beta.len());
        let mut outside = beta.to_owned();
        for &i in &set.indices {
            inside[i] = beta[i];
            outside[i] = 0.0;
        }
        Ok(self.value_unchecked(beta)
            - self.value_unchecked(inside.view())
            - self.value_unchecked(outside.view()))
    }

    /// The weak norm Ω̲ paired with this penalty.
    pub fn weak(&self, weak: WeakNorm) -> Norm {
        match weak {
            WeakNorm::L1 => Norm::L1 { p: self.p() },
            WeakNorm::SameAsPenalty => self.clone(),
        }
    }

    /// Extends the norm to `k` extra leading coordinates, each its own group.
    pub fn with_leading(&self, k: usize) -> Norm {
        match self {
            Norm::L1 { p } => Norm::L1 { p: p + k },
            Norm::WeightedGroupLasso(part) => Norm::WeightedGroupLasso(part.with_leading_singletons(k)),
        }
    }

    /// The norm on the coordinates that remain once index `j` is dropped.
    pub fn without(&self, j: usize) -> Norm {
        match self {
            Norm::L1 { p } => Norm::L1 { p: p - 1 },
            Norm::WeightedGroupLasso(part) => Norm::WeightedGroupLasso(part.without_index(j)),
        }
    }
}

fn group_l2(v: ArrayView1<f64>, group: &[usize]) -> f64 {
    libm::sqrt(group.iter().map(|&i| v[i] * v[i]).sum())
}

#[inline]
pub(crate) fn soft_threshold(x: f64, t: f64) -> f64 {
    if x > t {
        x - t
    } else if x < -t {
        x + t
    } else {
        0.0
    }
}

/// The penalty norm together with the weak norm used for nodewise
/// regressions.
#[derive(Debug, Clone, PartialEq)]
pub struct NormSpec {
    pub norm: Norm,
    pub weak: WeakNorm,
}

impl NormSpec {
    pub fn l1(p: usize) -> Self {
        Self { norm: Norm::L1 { p }, weak: WeakNorm::L1 }
    }

    pub fn group_lasso(partition: GroupPartition) -> Self {
        Self { norm: Norm::WeightedGroupLasso(partition), weak: WeakNorm::L1 }
    }

    pub fn with_weak(mut self, weak: WeakNorm) -> Self {
        self.weak = weak;
        self
    }

    pub fn p(&self) -> usize {
        self.norm.p()
    }

    pub fn weak_norm(&self) -> Norm {
        self.norm.weak(self.weak)
    }
}

/// An index set over which the penalty decomposes. For the group norm it
/// must be a union of whole groups.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AllowedSet {
    indices: Vec<usize>,
}

impl AllowedSet {
    pub fn new(norm: &Norm, mut indices: Vec<usize>) -> Result<Self> {
        indices.sort_unstable();
        indices.dedup();
        let set = Self { indices };
        set.check_for(norm)?;
        Ok(set)
    }

    /// The union of the given (0-based) groups.
    pub fn from_groups(partition: &GroupPartition, groups: &[usize]) -> Self {
        let mut indices: Vec<usize> =
            groups.iter().flat_map(|&g| partition.groups[g].iter().copied()).collect();
        indices.sort_unstable();
        indices.dedup();
        Self { indices }
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    fn check_for(&self, norm: &Norm) -> Result<()> {
        if let Some(&i) = self.indices.iter().find(|&&i| i >= norm.p()) {
            return Err(invalid(alloc::format!("allowed-set index {} exceeds p = {}", i + 1, norm.p())));
        }
        if let Norm::WeightedGroupLasso(part) = norm {
            let mut count = vec![0usize; part.num_groups()];
            for &i in &self.indices {
                count[part.group_of(i)] += 1;
            }
            for (g, &c) in count.iter().enumerate() {
                if c != 0 && c != part.groups[g].len() {
                    return Err(Error::NotAllowedSet { group: g + 1 });
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use ndarray::array;

    fn two_pairs() -> Norm {
        Norm::WeightedGroupLasso(GroupPartition::contiguous(&[2, 2]).unwrap())
    }

    #[test]
    fn group_norm_value() {
        let v = two_pairs().value(array![3.0, 4.0, 0.0, 0.0].view()).unwrap();
        assert!((v - 2f64.sqrt() * 5.0).abs() < 1e-12);
        assert_eq!(Norm::L1 { p: 3 }.value(array![1.0, -2.0, 3.0].view()).unwrap(), 6.0);
        assert_eq!(two_pairs().value(Array1::zeros(4).view()).unwrap(), 0.0);
    }

    #[test]
    fn dual_values() {
        let d = two_pairs().dual(array![3.0, 4.0, 0.0, 0.0].view()).unwrap();
        assert!((d - 5.0 / 2f64.sqrt()).abs() < 1e-12);
        assert_eq!(Norm::L1 { p: 3 }.dual(array![1.0, -2.0, 3.0].view()).unwrap(), 3.0);
    }

    #[test]
    fn dimension_mismatch() {
        assert_eq!(
            two_pairs().value(array![1.0].view()),
            Err(Error::DimensionMismatch { expected: 4, found: 1 })
        );
    }

    #[test]
    fn prox_edge_cases() {
        let norm = Norm::WeightedGroupLasso(GroupPartition::contiguous(&[2]).unwrap());
        let v = array![3.0, 4.0];
        assert_eq!(norm.prox(v.view(), 0.0).unwrap(), v);
        assert_eq!(norm.prox(v.view(), 5.0 / 2f64.sqrt()).unwrap(), array![0.0, 0.0]);
        assert_eq!(norm.prox(array![0.0, 0.0].view(), 1.0).unwrap(), array![0.0, 0.0]);
        let shrunk = norm.prox(v.view(), 1.0).unwrap();
        let f = 1.0 - 2f64.sqrt() / 5.0;
        assert!((shrunk[0] - 3.0 * f).abs() < 1e-15 && (shrunk[1] - 4.0 * f).abs() < 1e-15);
        assert!(norm.prox(v.view(), -1.0).is_err());
    }

    #[test]
    fn soft_thresholding() {
        let p = Norm::L1 { p: 3 }.prox(array![2.0, -0.5, -3.0].view(), 1.0).unwrap();
        assert_eq!(p, array![1.0, 0.0, -2.0]);
    }

    #[test]
    fn partition_validation() {
        assert!(GroupPartition::new(vec![vec![0, 1], vec![1, 2]], 3).is_err());
        assert!(GroupPartition::new(vec![vec![0, 1]], 3).is_err());
        assert!(GroupPartition::new(vec![vec![0, 1, 2], vec![]], 3).is_err());
        assert!(GroupPartition::new(vec![vec![0, 3]], 3).is_err());
        assert!(GroupPartition::from_one_based(&[vec![0, 1]], 2).is_err());
        let part = GroupPartition::from_one_based(&[vec![2, 1], vec![3]], 3).unwrap();
        assert_eq!(part.to_one_based(), vec![vec![2, 1], vec![3]]);
    }

    #[test]
    fn allowed_sets() {
        let norm = two_pairs();
        assert_eq!(AllowedSet::new(&norm, vec![0]), Err(Error::NotAllowedSet { group: 1 }));
        let set = AllowedSet::new(&norm, vec![1, 0]).unwrap();
        let gap = norm.decomposition_gap(array![3.0, 4.0, 1.0, 1.0].view(), &set).unwrap();
        assert!(gap.abs() < 1e-12);
        let l1 = Norm::L1 { p: 4 };
        let set = AllowedSet::new(&l1, vec![2]).unwrap();
        assert!(l1.decomposition_gap(array![3.0, -4.0, 1.0, 1.0].view(), &set).unwrap().abs() < 1e-15);
    }

    #[test]
    fn leading_and_removed_coordinates() {
        let norm = two_pairs().with_leading(1);
        assert_eq!(norm.p(), 5);
        let v = norm.value(array![-2.0, 3.0, 4.0, 0.0, 0.0].view()).unwrap();
        assert!((v - 2.0 - 2f64.sqrt() * 5.0).abs() < 1e-12);
        let dropped = norm.without(2);
        match dropped {
            Norm::WeightedGroupLasso(part) => {
                assert_eq!(part.groups(), &[vec![0], vec![1], vec![2, 3]]);
            }
            _ => unreachable!(),
        }
    }
}
