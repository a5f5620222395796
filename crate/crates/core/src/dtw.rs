//! Dynamic time warping over continuous action windows, online clustering of
//! equivalent windows, and symbolization of continuous corpora into discrete
//! cluster-id streams.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{ActionSeq, Macro, Trajectory};

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Full-matrix DTW with Euclidean local cost and match/insert/delete steps.
pub fn dtw_distance(s1: &[Vec<f64>], s2: &[Vec<f64>]) -> Result<f64> {
    dtw_distance_banded(s1, s2, None)
}

/// DTW restricted to a Sakoe-Chiba band of half-width `band` around the
/// (length-scaled) diagonal. `None` means no constraint.
pub fn dtw_distance_banded(s1: &[Vec<f64>], s2: &[Vec<f64>], band: Option<usize>) -> Result<f64> {
    if s1.is_empty() || s2.is_empty() {
        return Err(Error::EmptySignal);
    }
    let (n, m) = (s1.len(), s2.len());
    let mut prev = vec![f64::INFINITY; m + 1];
    let mut cur = vec![f64::INFINITY; m + 1];
    prev[0] = 0.0;
    for i in 1..=n {
        cur.fill(f64::INFINITY);
        let (lo, hi) = match band {
            None => (1, m),
            Some(w) => {
                let center = (i as f64 * m as f64 / n as f64).round() as isize;
                let lo = (center - w as isize).max(1) as usize;
                let hi = ((center + w as isize).max(1) as usize).min(m);
                (lo, hi)
            }
        };
        for j in lo..=hi {
            let cost = euclidean(&s1[i - 1], &s2[j - 1]);
            cur[j] = cost + prev[j - 1].min(prev[j]).min(cur[j - 1]);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    Ok(prev[m])
}

/// Scalar convenience wrapper.
pub fn dtw_distance_scalar(s1: &[f64], s2: &[f64]) -> Result<f64> {
    let a: Vec<Vec<f64>> = s1.iter().map(|&x| vec![x]).collect();
    let b: Vec<Vec<f64>> = s2.iter().map(|&x| vec![x]).collect();
    dtw_distance(&a, &b)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cluster {
    pub id: usize,
    pub count: usize,
    #[serde(skip)]
    sum: Vec<Vec<f64>>,
    pub mean: Vec<Vec<f64>>,
}

impl Cluster {
    fn new(id: usize, member: &[Vec<f64>]) -> Self {
        Cluster {
            id,
            count: 1,
            sum: member.to_vec(),
            mean: member.to_vec(),
        }
    }

    fn absorb(&mut self, member: &[Vec<f64>]) {
        if self.sum.is_empty() {
            // loaded from a dump, which stores only the mean
            let c = self.count as f64;
            self.sum = self.mean.iter().map(|r| r.iter().map(|v| v * c).collect()).collect();
        }
        self.count += 1;
        for (s, x) in self.sum.iter_mut().zip(member) {
            for (si, xi) in s.iter_mut().zip(x) {
                *si += xi;
            }
        }
        let c = self.count as f64;
        self.mean = self
            .sum
            .iter()
            .map(|s| s.iter().map(|v| v / c).collect())
            .collect();
    }
}

/// Online registry of DTW-equivalence clusters over fixed-length windows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterRegistry {
    pub alpha: f64,
    pub window_len: usize,
    pub clusters: Vec<Cluster>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub band: Option<usize>,
}

impl ClusterRegistry {
    pub fn new(alpha: f64, window_len: usize) -> Result<Self> {
        if !(alpha > 0.0) || window_len == 0 {
            return Err(Error::InvalidParams("need alpha > 0 and window_len >= 1".into()));
        }
        Ok(ClusterRegistry {
            alpha,
            window_len,
            clusters: Vec::new(),
            band: None,
        })
    }

    pub fn with_band(mut self, band: Option<usize>) -> Self {
        self.band = band;
        self
    }

    pub fn len(&self) -> usize {
        self.clusters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clusters.is_empty()
    }

    /// Joins the nearest cluster when its mean is closer than `alpha`
    /// (ties toward the lower id), otherwise opens a new cluster. Returns the
    /// cluster id and whether it was created.
    pub fn assign_cluster(&mut self, candidate: &[Vec<f64>]) -> Result<(usize, bool)> {
        if candidate.len() != self.window_len {
            return Err(Error::WindowLengthMismatch {
                expected: self.window_len,
                got: candidate.len(),
            });
        }
        let mut nearest: Option<(usize, f64)> = None;
        for (i, c) in self.clusters.iter().enumerate() {
            let d = dtw_distance_banded(candidate, &c.mean, self.band)?;
            if nearest.is_none_or(|(_, best)| d < best) {
                nearest = Some((i, d));
            }
        }
        match nearest {
            Some((i, d)) if d < self.alpha => {
                self.clusters[i].absorb(candidate);
                Ok((self.clusters[i].id, false))
            }
            _ => {
                let id = self.clusters.len();
                self.clusters.push(Cluster::new(id, candidate));
                Ok((id, true))
            }
        }
    }

    /// Each cluster mean as a continuous macro, id = cluster id.
    pub fn mean_macros(&self) -> Vec<Macro> {
        self.clusters
            .iter()
            .map(|c| Macro {
                id: c.id,
                actions: ActionSeq::Continuous(c.mean.clone()),
            })
            .collect()
    }

    /// Concatenates the mean macros named by a symbol sequence.
    pub fn decode(&self, symbols: &[u32]) -> Vec<Vec<f64>> {
        symbols
            .iter()
            .flat_map(|&s| self.clusters[s as usize].mean.iter().cloned())
            .collect()
    }
}

/// Symbolized corpus together with the registry that produced it.
#[derive(Debug, Clone)]
pub struct Symbolized {
    pub trajectories: Vec<Trajectory>,
    pub registry: ClusterRegistry,
    pub dt: f64,
}

/// Number of samples covering a duration, `⌈duration / dt⌉`.
pub fn window_len_for(duration: f64, dt: f64) -> usize {
    // guard against 5.000000001 style rounding when duration is a multiple of dt
    let ratio = duration / dt;
    let rounded = ratio.round();
    if (ratio - rounded).abs() < 1e-9 {
        rounded as usize
    } else {
        ratio.ceil() as usize
    }
}

/// Cuts each continuous trajectory into consecutive non-overlapping windows
/// (dropping a final partial window) and replaces every window by its
/// cluster id.
pub fn symbolize(trajectories: &[Trajectory], l_duration: f64, alpha: f64) -> Result<Symbolized> {
    symbolize_banded(trajectories, l_duration, alpha, None)
}

pub fn symbolize_banded(
    trajectories: &[Trajectory],
    l_duration: f64,
    alpha: f64,
    band: Option<usize>,
) -> Result<Symbolized> {
    let first = trajectories.first().ok_or(Error::NoData)?;
    let dt = first
        .dt
        .ok_or_else(|| Error::TypeMismatch("symbolize needs continuous trajectories".into()))?;
    for t in trajectories {
        let tdt = t
            .dt
            .ok_or_else(|| Error::TypeMismatch("symbolize needs continuous trajectories".into()))?;
        if (tdt - dt).abs() > 1e-12 {
            return Err(Error::HeterogeneousSampling(dt, tdt));
        }
    }
    if !(l_duration >= dt) {
        return Err(Error::InvalidParams("window duration must be >= dt".into()));
    }
    let window_len = window_len_for(l_duration, dt);
    let mut registry = ClusterRegistry::new(alpha, window_len)?.with_band(band);
    let mut out = Vec::with_capacity(trajectories.len());
    for t in trajectories {
        let actions = t.actions.as_continuous()?;
        let mut symbols = Vec::with_capacity(actions.len() / window_len);
        for w in actions.chunks_exact(window_len) {
            let (id, _) = registry.assign_cluster(w)?;
            symbols.push(id as u32);
        }
        out.push(Trajectory::discrete(t.task_id.clone(), symbols));
    }
    Ok(Symbolized {
        trajectories: out,
        registry,
        dt,
    })
}
