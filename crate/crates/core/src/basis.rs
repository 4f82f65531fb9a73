//! Outcome spaces, cluster structures and the orthogonal product basis.
//!
//! Every variable gets an integer basis of `k` pairwise-orthogonal contrast
//! vectors whose first member is the constant vector. A basis function over the
//! outcome space is a product of one non-constant contrast per variable in its
//! support; the basis of a cluster structure is every such product whose support
//! fits inside some cluster.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use nalgebra::DMatrix;
use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A bitmask over domain variables.
pub type VarSet = u64;

pub const MAX_VARIABLES: usize = 64;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Variable {
    pub name: String,
    pub levels: Vec<String>,
}

impl Variable {
    pub fn arity(&self) -> usize {
        self.levels.len()
    }
}

#[derive(Deserialize)]
struct DomainRepr {
    variables: Vec<Variable>,
}

/// Attribute variables with finite domains. Outcomes are enumerated row-major,
/// last variable fastest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "DomainRepr")]
pub struct Domain {
    variables: Vec<Variable>,
    #[serde(skip)]
    strides: Vec<usize>,
    #[serde(skip)]
    size: usize,
    #[serde(skip)]
    contrasts: Vec<Vec<Vec<i64>>>,
}

impl TryFrom<DomainRepr> for Domain {
    type Error = Error;

    fn try_from(repr: DomainRepr) -> Result<Self> {
        Domain::new(repr.variables)
    }
}

impl Domain {
    pub fn new(variables: Vec<Variable>) -> Result<Self> {
        if variables.is_empty() {
            return Err(Error::InvalidDomain("no variables".into()));
        }
        if variables.len() > MAX_VARIABLES {
            return Err(Error::InvalidDomain(format!(
                "at most {MAX_VARIABLES} variables supported"
            )));
        }
        let mut seen = BTreeSet::new();
        for v in &variables {
            if v.name.is_empty() || v.name.contains(['=', '|']) {
                return Err(Error::InvalidDomain(format!("bad variable name `{}`", v.name)));
            }
            if !seen.insert(v.name.as_str()) {
                return Err(Error::InvalidDomain(format!("duplicate variable `{}`", v.name)));
            }
            if v.arity() < 2 {
                return Err(Error::InvalidDomain(format!(
                    "variable `{}` has arity {} (< 2)",
                    v.name,
                    v.arity()
                )));
            }
            let mut levels = BTreeSet::new();
            for l in &v.levels {
                if l.is_empty() || l.contains(['=', '|']) || !levels.insert(l.as_str()) {
                    return Err(Error::InvalidDomain(format!(
                        "bad or duplicate level `{l}` in `{}`",
                        v.name
                    )));
                }
            }
        }

        let mut strides = vec![1usize; variables.len()];
        for i in (0..variables.len() - 1).rev() {
            strides[i] = strides[i + 1]
                .checked_mul(variables[i + 1].arity())
                .ok_or_else(|| Error::InvalidDomain("outcome space too large".into()))?;
        }
        let size = strides[0]
            .checked_mul(variables[0].arity())
            .ok_or_else(|| Error::InvalidDomain("outcome space too large".into()))?;
        let contrasts = variables
            .iter()
            .map(|v| single_var_basis(v.arity()))
            .collect::<Result<Vec<_>>>()?;

        Ok(Self {
            variables,
            strides,
            size,
            contrasts,
        })
    }

    /// Convenience constructor with generated level names `<name lowercase><i>`.
    pub fn with_arities(spec: &[(&str, usize)]) -> Result<Self> {
        let variables = spec
            .iter()
            .map(|(name, k)| Variable {
                name: (*name).to_string(),
                levels: (1..=*k).map(|i| format!("{}{}", name.to_lowercase(), i)).collect(),
            })
            .collect();
        Self::new(variables)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn variables(&self) -> &[Variable] {
        &self.variables
    }

    pub fn num_variables(&self) -> usize {
        self.variables.len()
    }

    pub fn arity(&self, var: usize) -> usize {
        self.variables[var].arity()
    }

    pub fn num_outcomes(&self) -> usize {
        self.size
    }

    pub fn strides(&self) -> &[usize] {
        &self.strides
    }

    pub fn all_variables(&self) -> VarSet {
        if self.variables.len() == 64 {
            u64::MAX
        } else {
            (1u64 << self.variables.len()) - 1
        }
    }

    pub fn variable_index(&self, name: &str) -> Result<usize> {
        self.variables
            .iter()
            .position(|v| v.name == name)
            .ok_or_else(|| Error::UnknownVariable(name.to_string()))
    }

    /// Contrast vectors for variable `var`; entry `[i][x]` is `h_i(x)`.
    pub fn contrasts(&self, var: usize) -> &[Vec<i64>] {
        &self.contrasts[var]
    }

    pub fn assignment(&self, index: usize) -> Vec<usize> {
        self.strides
            .iter()
            .zip(&self.variables)
            .map(|(s, v)| (index / s) % v.arity())
            .collect()
    }

    pub fn outcome(&self, index: usize) -> Result<Outcome> {
        if index >= self.size {
            return Err(Error::OutcomeOutOfRange { index, size: self.size });
        }
        Ok(Outcome {
            index,
            assignment: self.assignment(index),
        })
    }

    pub fn index_of(&self, assignment: &[usize]) -> Result<usize> {
        if assignment.len() != self.variables.len() {
            return Err(Error::DimensionMismatch {
                expected: self.variables.len(),
                got: assignment.len(),
            });
        }
        let mut index = 0;
        for ((&level, stride), var) in assignment.iter().zip(&self.strides).zip(&self.variables) {
            if level >= var.arity() {
                return Err(Error::Malformed(format!(
                    "level {level} out of range for `{}`",
                    var.name
                )));
            }
            index += level * stride;
        }
        Ok(index)
    }

    /// Canonical key such as `A=a2|B=b1|C=c1`.
    pub fn outcome_key(&self, index: usize) -> String {
        self.assignment(index)
            .iter()
            .zip(&self.variables)
            .map(|(&l, v)| format!("{}={}", v.name, v.levels[l]))
            .collect::<Vec<_>>()
            .join("|")
    }

    pub fn parse_outcome_key(&self, key: &str) -> Result<usize> {
        let parts: Vec<&str> = key.split('|').collect();
        if parts.len() != self.variables.len() {
            return Err(Error::Malformed(format!("bad outcome key `{key}`")));
        }
        let mut assignment = Vec::with_capacity(parts.len());
        for (part, var) in parts.iter().zip(&self.variables) {
            let (name, level) = part
                .split_once('=')
                .ok_or_else(|| Error::Malformed(format!("bad outcome key `{key}`")))?;
            if name != var.name {
                return Err(Error::Malformed(format!(
                    "outcome key `{key}`: expected variable `{}`",
                    var.name
                )));
            }
            let l = var
                .levels
                .iter()
                .position(|x| x == level)
                .ok_or_else(|| Error::Malformed(format!("unknown level `{level}` in `{key}`")))?;
            assignment.push(l);
        }
        self.index_of(&assignment)
    }

    /// Human-readable description, e.g. `T=none, D=normal`.
    pub fn describe(&self, index: usize) -> String {
        self.outcome_key(index).replace('|', ", ")
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Outcome {
    pub index: usize,
    pub assignment: Vec<usize>,
}

pub fn enumerate_outcomes(domain: &Domain) -> Vec<Outcome> {
    (0..domain.num_outcomes())
        .map(|index| Outcome {
            index,
            assignment: domain.assignment(index),
        })
        .collect()
}

fn gcd(a: i128, b: i128) -> i128 {
    let (mut a, mut b) = (a.abs(), b.abs());
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Orthogonal integer contrasts for a `k`-level variable.
///
/// Gram-Schmidt over the monomials `1, x, ..., x^(k-1)` evaluated at the level
/// codes `0..k`, in exact rational arithmetic. Each vector is rescaled to the
/// smallest integer vector whose first non-zero entry is positive.
pub fn single_var_basis(k: usize) -> Result<Vec<Vec<i64>>> {
    if k < 2 {
        return Err(Error::ArityTooSmall(k));
    }
    if k > 12 {
        return Err(Error::InvalidDomain(format!("arity {k} exceeds 12")));
    }
    type Q = Ratio<i128>;
    let dot = |a: &[Q], b: &[Q]| -> Q { a.iter().zip(b).map(|(x, y)| x * y).sum() };

    let mut ortho: Vec<Vec<Q>> = Vec::with_capacity(k);
    for p in 0..k as u32 {
        let mut v: Vec<Q> = (0..k as i128).map(|x| Q::from_integer(x.pow(p))).collect();
        for q in &ortho {
            let coef = dot(&v, q) / dot(q, q);
            for (vi, qi) in v.iter_mut().zip(q) {
                *vi -= coef * qi;
            }
        }
        ortho.push(v);
    }

    Ok(ortho
        .into_iter()
        .map(|v| {
            let lcm = v.iter().fold(1i128, |acc, x| acc / gcd(acc, *x.denom()) * x.denom());
            let ints: Vec<i128> = v.iter().map(|x| (x * lcm).to_integer()).collect();
            let g = ints.iter().fold(0i128, |acc, &x| gcd(acc, x));
            let sign = ints.iter().find(|&&x| x != 0).map_or(1, |x| x.signum());
            ints.iter().map(|&x| (sign * x / g) as i64).collect()
        })
        .collect())
}

/// A set of variable clusters in canonical form: no cluster is a subset of
/// another and clusters are sorted lexicographically by their sorted members.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct ClusterStructure {
    clusters: Vec<Vec<usize>>,
}

impl ClusterStructure {
    pub fn new(clusters: impl IntoIterator<Item = Vec<usize>>) -> Self {
        let mut sets: Vec<Vec<usize>> = clusters
            .into_iter()
            .map(|mut c| {
                c.sort_unstable();
                c.dedup();
                c
            })
            .filter(|c| !c.is_empty())
            .collect();
        sets.sort();
        sets.dedup();
        let subsumed = |i: usize| {
            sets.iter()
                .enumerate()
                .any(|(j, other)| j != i && other.len() > sets[i].len() && sets[i].iter().all(|v| other.contains(v)))
        };
        let keep: Vec<bool> = (0..sets.len()).map(|i| !subsumed(i)).collect();
        let clusters = sets.into_iter().zip(keep).filter_map(|(c, k)| k.then_some(c)).collect();
        Self { clusters }
    }

    pub fn empty() -> Self {
        Self::default()
    }

    /// One singleton cluster per variable.
    pub fn fully_additive(num_variables: usize) -> Self {
        Self::new((0..num_variables).map(|v| vec![v]))
    }

    pub fn fully_connected(num_variables: usize) -> Self {
        Self::new([(0..num_variables).collect()])
    }

    pub fn clusters(&self) -> &[Vec<usize>] {
        &self.clusters
    }

    pub fn is_empty(&self) -> bool {
        self.clusters.is_empty()
    }

    pub fn masks(&self) -> Vec<VarSet> {
        self.clusters.iter().map(|c| mask_of(c)).collect()
    }

    pub fn max_cluster_size(&self) -> usize {
        self.clusters.iter().map(Vec::len).max().unwrap_or(0)
    }

    pub fn validate(&self, domain: &Domain) -> Result<()> {
        for &v in self.clusters.iter().flatten() {
            if v >= domain.num_variables() {
                return Err(Error::UnknownVariable(format!("#{v}")));
            }
        }
        Ok(())
    }

    pub fn from_names(domain: &Domain, clusters: &[Vec<String>]) -> Result<Self> {
        let clusters = clusters
            .iter()
            .map(|c| c.iter().map(|n| domain.variable_index(n)).collect())
            .collect::<Result<Vec<Vec<usize>>>>()?;
        Ok(Self::new(clusters))
    }

    pub fn to_names(&self, domain: &Domain) -> Vec<Vec<String>> {
        self.clusters
            .iter()
            .map(|c| c.iter().map(|&v| domain.variables()[v].name.clone()).collect())
            .collect()
    }

    /// Number of clusters present in exactly one of the two structures.
    pub fn symmetric_difference(&self, other: &Self) -> usize {
        let a: BTreeSet<_> = self.clusters.iter().collect();
        let b: BTreeSet<_> = other.clusters.iter().collect();
        a.symmetric_difference(&b).count()
    }
}

impl fmt::Display for ClusterStructure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (i, c) in self.clusters.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{{")?;
            for (j, v) in c.iter().enumerate() {
                if j > 0 {
                    write!(f, ",")?;
                }
                write!(f, "X{}", v + 1)?;
            }
            write!(f, "}}")?;
        }
        write!(f, "}}")
    }
}

/// JSON form of a structure: `{"clusters":[["T","D"],["L"]]}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StructureSpec {
    pub clusters: Vec<Vec<String>>,
}

impl StructureSpec {
    pub fn resolve(&self, domain: &Domain) -> Result<ClusterStructure> {
        ClusterStructure::from_names(domain, &self.clusters)
    }

    pub fn of(structure: &ClusterStructure, domain: &Domain) -> Self {
        Self {
            clusters: structure.to_names(domain),
        }
    }
}

pub fn mask_of(vars: &[usize]) -> VarSet {
    vars.iter().fold(0, |m, &v| m | (1u64 << v))
}

/// Product of one non-constant contrast per variable in the support. The
/// empty product is the constant function.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct BasisFunction {
    /// `(variable, contrast index)` pairs sorted by variable; contrast index is
    /// zero-based and always `>= 1`.
    factors: Vec<(usize, usize)>,
}

impl BasisFunction {
    pub fn constant() -> Self {
        Self { factors: vec![] }
    }

    pub fn new(mut factors: Vec<(usize, usize)>) -> Self {
        factors.sort_unstable();
        debug_assert!(factors.iter().all(|&(_, i)| i >= 1));
        Self { factors }
    }

    pub fn factors(&self) -> &[(usize, usize)] {
        &self.factors
    }

    pub fn support(&self) -> Vec<usize> {
        self.factors.iter().map(|&(v, _)| v).collect()
    }

    pub fn support_mask(&self) -> VarSet {
        self.factors.iter().fold(0, |m, &(v, _)| m | (1u64 << v))
    }

    pub fn is_constant(&self) -> bool {
        self.factors.is_empty()
    }

    pub fn eval(&self, domain: &Domain, assignment: &[usize]) -> i64 {
        self.factors
            .iter()
            .map(|&(v, i)| domain.contrasts(v)[i][assignment[v]])
            .product()
    }

    fn sort_key(&self) -> (usize, Vec<usize>, Vec<usize>) {
        (
            self.factors.len(),
            self.support(),
            self.factors.iter().map(|&(_, i)| i).collect(),
        )
    }
}

/// Every basis function whose support lies within a variable set.
fn functions_within(domain: &Domain, vars: &[usize], out: &mut BTreeSet<BasisFunction>) {
    // Mixed-radix count over contrast indices 0..k per variable; 0 means the
    // variable is absent from the product.
    let mut idx = vec![0usize; vars.len()];
    loop {
        out.insert(BasisFunction::new(
            vars.iter()
                .zip(&idx)
                .filter(|(_, &i)| i > 0)
                .map(|(&v, &i)| (v, i))
                .collect(),
        ));
        let mut pos = 0;
        loop {
            if pos == vars.len() {
                return;
            }
            idx[pos] += 1;
            if idx[pos] < domain.arity(vars[pos]) {
                break;
            }
            idx[pos] = 0;
            pos += 1;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Basis {
    structure: ClusterStructure,
    functions: Vec<BasisFunction>,
}

impl Basis {
    pub fn structure(&self) -> &ClusterStructure {
        &self.structure
    }

    pub fn functions(&self) -> &[BasisFunction] {
        &self.functions
    }

    pub fn len(&self) -> usize {
        self.functions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.functions.is_empty()
    }
}

pub fn build_basis(domain: &Domain, structure: &ClusterStructure) -> Result<Basis> {
    structure.validate(domain)?;
    let mut set = BTreeSet::new();
    set.insert(BasisFunction::constant());
    for cluster in structure.clusters() {
        functions_within(domain, cluster, &mut set);
    }
    let mut functions: Vec<_> = set.into_iter().collect();
    functions.sort_by_cached_key(BasisFunction::sort_key);
    Ok(Basis {
        structure: structure.clone(),
        functions,
    })
}

/// `|H[S]| = prod_{X in S} k_X`, with `H[empty] = {1}`.
fn span_size(domain: &Domain, set: VarSet) -> u128 {
    (0..domain.num_variables())
        .filter(|v| set & (1u64 << v) != 0)
        .map(|v| domain.arity(v) as u128)
        .product()
}

/// Basis size by inclusion-exclusion over cluster intersections.
///
/// Signed coefficients are accumulated per distinct intersection set, so the
/// cost is bounded by the number of distinct intersections rather than the
/// number of cluster subsets.
pub fn basis_count(domain: &Domain, structure: &ClusterStructure) -> Result<usize> {
    structure.validate(domain)?;
    if structure.is_empty() {
        return Ok(1);
    }
    let mut coef: BTreeMap<VarSet, i128> = BTreeMap::new();
    for mask in structure.masks() {
        let mut next = coef.clone();
        for (&set, &c) in &coef {
            *next.entry(set & mask).or_insert(0) -= c;
        }
        *next.entry(mask).or_insert(0) += 1;
        next.retain(|_, c| *c != 0);
        coef = next;
    }
    let total: i128 = coef.iter().map(|(&set, &c)| c * span_size(domain, set) as i128).sum();
    Ok(total as usize)
}

/// Rows are outcomes, columns are basis functions; entries are integers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DesignMatrix {
    rows: Vec<usize>,
    cols: usize,
    entries: Vec<i64>,
}

impl DesignMatrix {
    pub fn outcomes(&self) -> &[usize] {
        &self.rows
    }

    pub fn nrows(&self) -> usize {
        self.rows.len()
    }

    pub fn ncols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, row: usize, col: usize) -> i64 {
        self.entries[row * self.cols + col]
    }

    pub fn row(&self, row: usize) -> &[i64] {
        &self.entries[row * self.cols..(row + 1) * self.cols]
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.nrows(), self.cols, |i, j| self.get(i, j) as f64)
    }

    /// `A^T A` in exact integer arithmetic.
    pub fn gram(&self) -> Vec<Vec<i128>> {
        let mut g = vec![vec![0i128; self.cols]; self.cols];
        for r in 0..self.nrows() {
            let row = self.row(r);
            for i in 0..self.cols {
                for j in 0..self.cols {
                    g[i][j] += row[i] as i128 * row[j] as i128;
                }
            }
        }
        g
    }
}

pub fn design_matrix(domain: &Domain, basis: &Basis, outcomes: Option<&[usize]>) -> Result<DesignMatrix> {
    basis.structure().validate(domain)?;
    let rows: Vec<usize> = match outcomes {
        Some(o) => o.to_vec(),
        None => (0..domain.num_outcomes()).collect(),
    };
    let cols = basis.len();
    let mut entries = Vec::with_capacity(rows.len() * cols);
    for &o in &rows {
        let assignment = domain.outcome(o)?.assignment;
        entries.extend(basis.functions().iter().map(|f| f.eval(domain, &assignment)));
    }
    Ok(DesignMatrix { rows, cols, entries })
}

/// Coordinates of `u` along each (orthogonal) basis column.
pub fn project_exact(u: &[f64], design: &DesignMatrix) -> Result<Vec<f64>> {
    if u.len() != design.nrows() {
        return Err(Error::DimensionMismatch {
            expected: design.nrows(),
            got: u.len(),
        });
    }
    Ok((0..design.ncols())
        .map(|j| {
            let (num, den) = (0..design.nrows()).fold((0.0, 0.0), |(n, d), i| {
                let a = design.get(i, j) as f64;
                (n + a * u[i], d + a * a)
            });
            num / den
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dom(arities: &[usize]) -> Domain {
        let names = ["A", "B", "C", "D", "E"];
        let spec: Vec<_> = arities.iter().enumerate().map(|(i, &k)| (names[i], k)).collect();
        Domain::with_arities(&spec).unwrap()
    }

    #[test]
    fn enumeration_is_row_major() {
        let d = dom(&[2]);
        assert_eq!(enumerate_outcomes(&d).len(), 2);
        let d = dom(&[3, 2, 2]);
        assert_eq!(d.num_outcomes(), 12);
        assert_eq!(d.strides(), &[4, 2, 1]);
        assert_eq!(d.index_of(&[1, 0, 1]).unwrap(), 5);
        assert_eq!(d.assignment(5), vec![1, 0, 1]);
        assert_eq!(d.outcome_key(5), "A=a2|B=b1|C=c2");
        assert_eq!(d.parse_outcome_key("A=a2|B=b1|C=c2").unwrap(), 5);
    }

    #[test]
    fn small_contrasts() {
        assert_eq!(single_var_basis(2).unwrap(), vec![vec![1, 1], vec![1, -1]]);
        assert_eq!(
            single_var_basis(3).unwrap(),
            vec![vec![1, 1, 1], vec![1, 0, -1], vec![1, -2, 1]]
        );
        assert!(matches!(single_var_basis(1), Err(Error::ArityTooSmall(1))));
    }

    #[test]
    fn four_level_contrasts_are_orthogonal() {
        let b = single_var_basis(4).unwrap();
        assert_eq!(b[0], vec![1, 1, 1, 1]);
        for i in 0..4 {
            for j in i + 1..4 {
                let d: i64 = b[i].iter().zip(&b[j]).map(|(x, y)| x * y).sum();
                assert_eq!(d, 0, "h{i}.h{j}");
            }
        }
        assert_eq!(b[1], vec![3, 1, -1, -3]);
    }

    #[test]
    fn paper_example_count() {
        let d = dom(&[3, 3, 3, 3]);
        let s = ClusterStructure::new([vec![0], vec![1, 2], vec![2, 3]]);
        assert_eq!(build_basis(&d, &s).unwrap().len(), 17);
        assert_eq!(basis_count(&d, &s).unwrap(), 17);
    }

    #[test]
    fn count_edge_cases() {
        let d = dom(&[3, 2, 2]);
        assert_eq!(basis_count(&d, &ClusterStructure::empty()).unwrap(), 1);
        assert_eq!(basis_count(&d, &ClusterStructure::fully_connected(3)).unwrap(), 12);
        let s = ClusterStructure::new([vec![0, 1], vec![1, 2]]);
        assert_eq!(basis_count(&d, &s).unwrap(), 8);
        assert_eq!(build_basis(&d, &s).unwrap().len(), 8);
        let bin = dom(&[2, 2, 2, 2]);
        assert_eq!(basis_count(&bin, &ClusterStructure::fully_additive(4)).unwrap(), 5);
    }

    #[test]
    fn canonical_form_drops_subsumed() {
        let s = ClusterStructure::new([vec![2, 1], vec![1], vec![0], vec![1, 2]]);
        assert_eq!(s.clusters(), &[vec![0], vec![1, 2]]);
    }

    #[test]
    fn unknown_variable_rejected() {
        let d = dom(&[2, 2]);
        let s = ClusterStructure::new([vec![0, 5]]);
        assert!(matches!(build_basis(&d, &s), Err(Error::UnknownVariable(_))));
        assert!(ClusterStructure::from_names(&d, &[vec!["Z".into()]]).is_err());
    }

    #[test]
    fn binary_design_and_projection() {
        let d = dom(&[2]);
        let b = build_basis(&d, &ClusterStructure::fully_connected(1)).unwrap();
        let a = design_matrix(&d, &b, None).unwrap();
        assert_eq!(a.row(0), &[1, 1]);
        assert_eq!(a.row(1), &[1, -1]);
        assert_eq!(project_exact(&[1.0, 0.0], &a).unwrap(), vec![0.5, 0.5]);
        assert_eq!(project_exact(&[0.3, 0.3], &a).unwrap(), vec![0.3, 0.0]);
        assert!(project_exact(&[1.0], &a).is_err());
    }

    #[test]
    fn design_subset_rows() {
        let d = dom(&[3, 2, 2]);
        let b = build_basis(&d, &ClusterStructure::fully_additive(3)).unwrap();
        let sub = design_matrix(&d, &b, Some(&[5, 0])).unwrap();
        assert_eq!(sub.nrows(), 2);
        assert_eq!(sub.outcomes(), &[5, 0]);
        assert!(design_matrix(&d, &b, Some(&[12])).is_err());
        let full = design_matrix(&d, &b, None).unwrap();
        assert_eq!(sub.row(0), full.row(5));
        let g = full.gram();
        assert_eq!(g[0][0], 12);
    }

    #[test]
    fn domain_json_validates() {
        let d = Domain::from_json(
            r#"{"variables":[{"name":"T","levels":["none","cvs","amnio"]},{"name":"D","levels":["normal","down"]}]}"#,
        )
        .unwrap();
        assert_eq!(d.num_outcomes(), 6);
        assert_eq!(d.describe(0), "T=none, D=normal");
        assert!(Domain::from_json(r#"{"variables":[{"name":"T","levels":["x"]}]}"#).is_err());
        assert!(Domain::from_json(
            r#"{"variables":[{"name":"T","levels":["a","b"]},{"name":"T","levels":["a","b"]}]}"#
        )
        .is_err());
        let back: Domain = serde_json::from_str(&serde_json::to_string(&d).unwrap()).unwrap();
        assert_eq!(back, d);
    }
}
