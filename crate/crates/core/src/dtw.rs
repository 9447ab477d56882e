//! Banded dynamic time warping.
//!
//! Paths obey the usual boundary, monotonicity and continuity rules plus a
//! Sakoe-Chiba window: every step `(i, j)` satisfies `|i - j| < w`. Cells
//! outside the window are unreachable. The distance is the minimum summed
//! per-cell cost over admissible paths.

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One hour of shift at 15-minute sampling.
pub const DEFAULT_WINDOW: usize = 4;

/// Per-cell cost `d(x_i, y_j)`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CostMode {
    /// `|x_i - y_j|`
    #[default]
    Absolute,
    /// `(x_i - y_j)^2`
    Squared,
}

impl CostMode {
    #[inline]
    pub fn cost(self, a: f64, b: f64) -> f64 {
        match self {
            CostMode::Absolute => (a - b).abs(),
            CostMode::Squared => (a - b) * (a - b),
        }
    }

    fn code(self) -> u32 {
        match self {
            CostMode::Absolute => 0,
            CostMode::Squared => 1,
        }
    }

    fn from_code(code: u32) -> Option<Self> {
        match code {
            0 => Some(CostMode::Absolute),
            1 => Some(CostMode::Squared),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            CostMode::Absolute => "absolute",
            CostMode::Squared => "squared",
        }
    }
}

impl fmt::Display for CostMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CostMode {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "absolute" | "abs" => Ok(CostMode::Absolute),
            "squared" | "sq" => Ok(CostMode::Squared),
            other => Err(format!("unknown cost mode {other:?} (absolute|squared)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DtwParams {
    pub window: usize,
    pub cost: CostMode,
}

impl Default for DtwParams {
    fn default() -> Self {
        Self {
            window: DEFAULT_WINDOW,
            cost: CostMode::Absolute,
        }
    }
}

impl DtwParams {
    pub fn new(window: usize, cost: CostMode) -> Self {
        Self { window, cost }
    }

    fn validate(&self) -> Result<()> {
        if self.window == 0 {
            return Err(Error::InvalidWindow(0));
        }
        Ok(())
    }

    /// Column range of row `i` inside the window, for series of length `n`.
    #[inline]
    fn band(&self, i: usize, n: usize) -> (usize, usize) {
        let reach = self.window - 1;
        (i.saturating_sub(reach), (i + reach).min(n - 1))
    }
}

/// Alignment between two equal-length series, from `(0, 0)` to `(n-1, n-1)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WarpingPath {
    pub steps: Vec<(usize, usize)>,
}

impl WarpingPath {
    /// Check boundary, monotonicity, continuity and window constraints.
    pub fn is_admissible(&self, n: usize, window: usize) -> bool {
        let (Some(&first), Some(&last)) = (self.steps.first(), self.steps.last()) else {
            return false;
        };
        if first != (0, 0) || n == 0 || last != (n - 1, n - 1) {
            return false;
        }
        let in_window = |&(i, j): &(usize, usize)| i.abs_diff(j) < window;
        self.steps.iter().all(in_window)
            && self.steps.windows(2).all(|p| {
                let ((i0, j0), (i1, j1)) = (p[0], p[1]);
                i1 >= i0 && j1 >= j0 && i1 - i0 <= 1 && j1 - j0 <= 1 && (i1, j1) != (i0, j0)
            })
    }

    /// Summed cost of the path over `x` and `y`.
    pub fn cost(&self, x: &[f64], y: &[f64], mode: CostMode) -> f64 {
        self.steps.iter().map(|&(i, j)| mode.cost(x[i], y[j])).sum()
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

fn check_pair(x: &[f64], y: &[f64], params: &DtwParams) -> Result<usize> {
    params.validate()?;
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    if x.is_empty() {
        return Err(Error::EmptySeries);
    }
    Ok(x.len())
}

/// Banded DTW distance with two rolling rows.
#[allow(clippy::needless_range_loop)]
pub fn dtw_distance(x: &[f64], y: &[f64], params: DtwParams) -> Result<f64> {
    let n = check_pair(x, y, &params)?;
    let mut prev = vec![f64::INFINITY; n];
    let mut cur = vec![f64::INFINITY; n];

    for i in 0..n {
        let (lo, hi) = params.band(i, n);
        if lo > 0 {
            // left neighbour of the band start; stale from two rows back
            cur[lo - 1] = f64::INFINITY;
        }
        for j in lo..=hi {
            let c = params.cost.cost(x[i], y[j]);
            let best = if i == 0 && j == 0 {
                0.0
            } else {
                let up = if i > 0 { prev[j] } else { f64::INFINITY };
                let diag = if i > 0 && j > 0 { prev[j - 1] } else { f64::INFINITY };
                let left = if j > 0 { cur[j - 1] } else { f64::INFINITY };
                up.min(diag).min(left)
            };
            cur[j] = c + best;
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    Ok(prev[n - 1])
}

/// Banded DTW distance and its optimal warping path.
///
/// Backtrace ties prefer the diagonal, then `(i-1, j)`, then `(i, j-1)`.
pub fn dtw_path(x: &[f64], y: &[f64], params: DtwParams) -> Result<(f64, WarpingPath)> {
    let n = check_pair(x, y, &params)?;
    let mut acc = vec![f64::INFINITY; n * n];
    let at = |i: usize, j: usize| i * n + j;

    for i in 0..n {
        let (lo, hi) = params.band(i, n);
        for j in lo..=hi {
            let c = params.cost.cost(x[i], y[j]);
            let best = if i == 0 && j == 0 {
                0.0
            } else {
                let up = if i > 0 { acc[at(i - 1, j)] } else { f64::INFINITY };
                let diag = if i > 0 && j > 0 { acc[at(i - 1, j - 1)] } else { f64::INFINITY };
                let left = if j > 0 { acc[at(i, j - 1)] } else { f64::INFINITY };
                up.min(diag).min(left)
            };
            acc[at(i, j)] = c + best;
        }
    }

    let mut steps = Vec::with_capacity(2 * n);
    let (mut i, mut j) = (n - 1, n - 1);
    steps.push((i, j));
    while (i, j) != (0, 0) {
        let mut next = None;
        let mut best = f64::INFINITY;
        for cand in [
            (i > 0 && j > 0).then(|| (i - 1, j - 1)),
            (i > 0).then(|| (i - 1, j)),
            (j > 0).then(|| (i, j - 1)),
        ]
        .into_iter()
        .flatten()
        {
            let v = acc[at(cand.0, cand.1)];
            if v < best {
                best = v;
                next = Some(cand);
            }
        }
        (i, j) = next.expect("band always connects (0,0) to (n-1,n-1)");
        steps.push((i, j));
    }
    steps.reverse();
    Ok((acc[at(n - 1, n - 1)], WarpingPath { steps }))
}

/// Symmetric matrix of pairwise DTW distances, stored dense.
///
/// Memory is `8 * n^2` bytes: about 3.9 GB at 22 000 curves.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    n: usize,
    data: Vec<f64>,
    curve_ids: Vec<u64>,
    params: DtwParams,
}

impl DistanceMatrix {
    /// Build from a dense row-major matrix. Checks shape, symmetry, zero
    /// diagonal and finiteness.
    pub fn from_dense(n: usize, data: Vec<f64>, params: DtwParams) -> Result<Self> {
        if data.len() != n * n {
            return Err(Error::Format(format!("expected {} entries, got {}", n * n, data.len())));
        }
        for i in 0..n {
            if data[i * n + i] != 0.0 {
                return Err(Error::Format(format!("non-zero diagonal at {i}")));
            }
            for j in (i + 1)..n {
                let v = data[i * n + j];
                if !v.is_finite() || v < 0.0 || v != data[j * n + i] {
                    return Err(Error::Format(format!("bad entry at ({i},{j})")));
                }
            }
        }
        Ok(Self {
            n,
            data,
            curve_ids: (0..n as u64).collect(),
            params,
        })
    }

    /// Replace the index → curve id mapping.
    pub fn with_curve_ids(mut self, ids: Vec<u64>) -> Result<Self> {
        if ids.len() != self.n {
            return Err(Error::Format(format!(
                "{} curve ids for a {}-curve matrix",
                ids.len(),
                self.n
            )));
        }
        self.curve_ids = ids;
        Ok(self)
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn curve_ids(&self) -> &[u64] {
        &self.curve_ids
    }

    pub fn params(&self) -> DtwParams {
        self.params
    }

    /// Multiply every entry by `k`.
    pub fn scaled(&self, k: f64) -> Self {
        Self {
            data: self.data.iter().map(|d| d * k).collect(),
            ..self.clone()
        }
    }

    const MAGIC: &'static [u8; 8] = b"LNDTWMAT";
    const VERSION: u32 = 1;

    /// Binary layout, little endian: magic `LNDTWMAT`, u32 version, u32 cost
    /// mode, u64 n, u64 window, then the strict upper triangle as f64,
    /// row-major.
    pub fn write_binary<W: Write>(&self, mut out: W) -> Result<()> {
        out.write_all(Self::MAGIC)?;
        out.write_all(&Self::VERSION.to_le_bytes())?;
        out.write_all(&self.params.cost.code().to_le_bytes())?;
        out.write_all(&(self.n as u64).to_le_bytes())?;
        out.write_all(&(self.params.window as u64).to_le_bytes())?;
        let mut buf = Vec::with_capacity(8 * self.n);
        for i in 0..self.n {
            buf.clear();
            for j in (i + 1)..self.n {
                buf.extend_from_slice(&self.get(i, j).to_le_bytes());
            }
            out.write_all(&buf)?;
        }
        out.flush()?;
        Ok(())
    }

    /// Inverse of [`write_binary`](Self::write_binary). Curve ids default to
    /// `0..n`; attach the sidecar with [`with_curve_ids`](Self::with_curve_ids).
    pub fn read_binary<R: Read>(mut input: R) -> Result<Self> {
        let mut magic = [0u8; 8];
        input.read_exact(&mut magic)?;
        if &magic != Self::MAGIC {
            return Err(Error::Format("not a distance-matrix file".into()));
        }
        let mut u32buf = [0u8; 4];
        let mut u64buf = [0u8; 8];
        input.read_exact(&mut u32buf)?;
        let version = u32::from_le_bytes(u32buf);
        if version != Self::VERSION {
            return Err(Error::Format(format!("unsupported matrix version {version}")));
        }
        input.read_exact(&mut u32buf)?;
        let cost = CostMode::from_code(u32::from_le_bytes(u32buf))
            .ok_or_else(|| Error::Format("unknown cost mode".into()))?;
        input.read_exact(&mut u64buf)?;
        let n = u64::from_le_bytes(u64buf) as usize;
        input.read_exact(&mut u64buf)?;
        let window = u64::from_le_bytes(u64buf) as usize;

        let mut data = vec![0.0; n * n];
        for i in 0..n {
            for j in (i + 1)..n {
                input.read_exact(&mut u64buf)?;
                let v = f64::from_le_bytes(u64buf);
                data[i * n + j] = v;
                data[j * n + i] = v;
            }
        }
        let mut trailing = [0u8; 1];
        if input.read(&mut trailing)? != 0 {
            return Err(Error::Format("trailing bytes after matrix".into()));
        }
        Self::from_dense(n, data, DtwParams { window, cost })
    }

    /// Sidecar JSON: `{"curve_ids": [...]}` in matrix index order.
    pub fn write_ids_json<W: Write>(&self, mut out: W) -> Result<()> {
        let s = crate::fmt::to_json_string(&IdSidecar {
            curve_ids: self.curve_ids.clone(),
        })?;
        out.write_all(s.as_bytes())?;
        Ok(())
    }

    pub fn read_ids_json<R: Read>(input: R) -> Result<Vec<u64>> {
        let side: IdSidecar = serde_json::from_reader(input)?;
        Ok(side.curve_ids)
    }
}

#[derive(Serialize, Deserialize)]
struct IdSidecar {
    curve_ids: Vec<u64>,
}

/// All pairwise DTW distances. Each unordered pair is computed once; rows are
/// distributed over the rayon pool and written to disjoint slots.
pub fn pairwise_distances<C>(curves: &[C], params: DtwParams) -> Result<DistanceMatrix>
where
    C: AsRef<[f64]> + Sync,
{
    let n = curves.len();
    if n < 2 {
        return Err(Error::TooFewCurves(n));
    }
    params.validate()?;
    let len = curves[0].as_ref().len();
    if let Some(bad) = curves.iter().find(|c| c.as_ref().len() != len) {
        return Err(Error::LengthMismatch {
            left: len,
            right: bad.as_ref().len(),
        });
    }

    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            ((i + 1)..n)
                .map(|j| dtw_distance(curves[i].as_ref(), curves[j].as_ref(), params))
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;

    let mut data = vec![0.0; n * n];
    for (i, row) in rows.into_iter().enumerate() {
        for (off, d) in row.into_iter().enumerate() {
            let j = i + 1 + off;
            data[i * n + j] = d;
            data[j * n + i] = d;
        }
    }
    Ok(DistanceMatrix {
        n,
        data,
        curve_ids: (0..n as u64).collect(),
        params,
    })
}
