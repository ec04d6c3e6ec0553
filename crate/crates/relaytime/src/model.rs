//! Geometry and parameters of the relay-chain system: planar points,
//! path-loss laws, chain topologies, and the interference model knobs.

use std::fmt;

use crate::error::{Error, Result};

/// A point in the plane. Coordinates are in arbitrary consistent length
/// units; the path-loss laws put the near-field/far-field break at
/// distance 1 in these units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const ORIGIN: Point = Point { x: 0.0, y: 0.0 };

    pub fn new(x: f64, y: f64) -> Point {
        Point { x, y }
    }

    pub fn distance(self, other: Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Distance-based power attenuation g(d).
///
/// `Singular` is the pure power law d^(-alpha); it blows up at d = 0,
/// which is exactly what makes some dependent-mode moments infinite.
/// `Bounded` caps the law at 1 inside the unit disk, min(1, d^(-alpha)),
/// and keeps every moment in this crate finite. Both require alpha > 2 so
/// far-field interference integrals converge.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathLossModel {
    kind: PathLossKind,
    alpha: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PathLossKind {
    Singular,
    Bounded,
}

impl fmt::Display for PathLossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PathLossKind::Singular => "singular",
            PathLossKind::Bounded => "bounded",
        })
    }
}

impl PathLossModel {
    pub fn singular(alpha: f64) -> Result<PathLossModel> {
        Self::validated(PathLossKind::Singular, alpha)
    }

    pub fn bounded(alpha: f64) -> Result<PathLossModel> {
        Self::validated(PathLossKind::Bounded, alpha)
    }

    fn validated(kind: PathLossKind, alpha: f64) -> Result<PathLossModel> {
        if !(alpha > 2.0) || !alpha.is_finite() {
            return Err(Error::invalid(
                "alpha",
                format!("path-loss exponent must be finite and > 2, got {alpha}"),
            ));
        }
        Ok(PathLossModel { kind, alpha })
    }

    pub fn kind(self) -> PathLossKind {
        self.kind
    }

    pub fn alpha(self) -> f64 {
        self.alpha
    }

    /// Gain at distance `dist` >= 0. Errors only for the singular law at
    /// zero distance, where the power law has no value.
    pub fn gain(self, dist: f64) -> Result<f64> {
        match self.kind {
            PathLossKind::Singular => {
                if dist == 0.0 {
                    Err(Error::SingularAtZeroDistance)
                } else {
                    Ok(dist.powf(-self.alpha))
                }
            }
            PathLossKind::Bounded => {
                if dist <= 1.0 {
                    Ok(1.0)
                } else {
                    Ok(dist.powf(-self.alpha))
                }
            }
        }
    }
}

/// Evaluate g(a, b) between two points under `model`.
pub fn path_loss(model: PathLossModel, a: Point, b: Point) -> Result<f64> {
    model.gain(a.distance(b))
}

/// Whether interferer positions are frozen for a packet's whole journey
/// (`Dependent`) or resampled every slot (`Independent`). Fading and
/// ALOHA activity are redrawn each slot in both modes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum InterferenceMode {
    Dependent,
    Independent,
}

impl fmt::Display for InterferenceMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            InterferenceMode::Dependent => "dependent",
            InterferenceMode::Independent => "independent",
        })
    }
}

/// Interference-field and protocol parameters shared by every link.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SystemParams {
    /// Interferer density per unit area (>= 0).
    pub intensity: f64,
    /// Per-slot ALOHA transmit probability of each interferer, in [0, 1].
    pub transmit_prob: f64,
    /// SIR decoding threshold (> 0).
    pub sir_threshold: f64,
    pub path_loss: PathLossModel,
    pub mode: InterferenceMode,
}

impl SystemParams {
    pub fn new(
        intensity: f64,
        transmit_prob: f64,
        sir_threshold: f64,
        path_loss: PathLossModel,
        mode: InterferenceMode,
    ) -> Result<SystemParams> {
        if !intensity.is_finite() || intensity < 0.0 {
            return Err(Error::invalid(
                "intensity",
                format!("interferer density must be finite and >= 0, got {intensity}"),
            ));
        }
        if !transmit_prob.is_finite() || !(0.0..=1.0).contains(&transmit_prob) {
            return Err(Error::invalid(
                "transmit_prob",
                format!("ALOHA probability must lie in [0, 1], got {transmit_prob}"),
            ));
        }
        if !sir_threshold.is_finite() || sir_threshold <= 0.0 {
            return Err(Error::invalid(
                "sir_threshold",
                format!("SIR threshold must be finite and > 0, got {sir_threshold}"),
            ));
        }
        Ok(SystemParams {
            intensity,
            transmit_prob,
            sir_threshold,
            path_loss,
            mode,
        })
    }
}

/// One hop of the chain: transmitter and receiver positions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Link {
    pub tx: Point,
    pub rx: Point,
}

impl Link {
    pub fn length(&self) -> f64 {
        self.tx.distance(self.rx)
    }
}

/// An ordered relay chain: the receiver of each hop transmits the next.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainTopology {
    links: Vec<Link>,
}

impl ChainTopology {
    /// Validates the relay structure: at least one link, no zero-length
    /// links, and each receiver is exactly the next transmitter.
    pub fn new(links: Vec<Link>) -> Result<ChainTopology> {
        if links.is_empty() {
            return Err(Error::invalid("links", "a chain needs at least one link"));
        }
        for (i, link) in links.iter().enumerate() {
            if link.tx == link.rx {
                return Err(Error::invalid(
                    "links",
                    format!("link {i} has coincident endpoints"),
                ));
            }
            if !link.tx.x.is_finite()
                || !link.tx.y.is_finite()
                || !link.rx.x.is_finite()
                || !link.rx.y.is_finite()
            {
                return Err(Error::invalid(
                    "links",
                    format!("link {i} has non-finite coordinates"),
                ));
            }
        }
        for (i, pair) in links.windows(2).enumerate() {
            if pair[0].rx != pair[1].tx {
                return Err(Error::invalid(
                    "links",
                    format!(
                        "chain is disconnected: receiver of link {i} is not \
                         the transmitter of link {}",
                        i + 1
                    ),
                ));
            }
        }
        Ok(ChainTopology { links })
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn len(&self) -> usize {
        self.links.len()
    }

    pub fn is_empty(&self) -> bool {
        false // a valid chain always has at least one link
    }

    /// Receivers in hop order (the integrand centers of every
    /// interference integral).
    pub fn receivers(&self) -> impl Iterator<Item = Point> + '_ {
        self.links.iter().map(|l| l.rx)
    }

    /// Mean of all node positions (transmitter of the first hop plus
    /// every receiver).
    pub fn centroid(&self) -> Point {
        let mut x = self.links[0].tx.x;
        let mut y = self.links[0].tx.y;
        for link in &self.links {
            x += link.rx.x;
            y += link.rx.y;
        }
        let n = (self.links.len() + 1) as f64;
        Point::new(x / n, y / n)
    }
}

/// Effective SIR threshold of one link: the raw threshold divided by the
/// signal path gain, theta / g(tx, rx). Under the bounded law with hop
/// length <= 1 this equals theta exactly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkThreshold(f64);

impl LinkThreshold {
    pub fn value(self) -> f64 {
        self.0
    }
}

/// Per-link effective thresholds in hop order.
pub fn link_thresholds(
    topology: &ChainTopology,
    params: &SystemParams,
) -> Result<Vec<LinkThreshold>> {
    topology
        .links()
        .iter()
        .map(|link| {
            let gain = path_loss(params.path_loss, link.tx, link.rx)?;
            Ok(LinkThreshold(params.sir_threshold / gain))
        })
        .collect()
}

/// Build a straight uniform chain of `hops` links of length `hop_length`,
/// starting at `origin` and heading along `direction` (normalized here).
pub fn uniform_chain(
    hops: usize,
    hop_length: f64,
    origin: Point,
    direction: (f64, f64),
) -> Result<ChainTopology> {
    if hops == 0 {
        return Err(Error::invalid("hops", "need at least one link"));
    }
    if !(hop_length > 0.0) || !hop_length.is_finite() {
        return Err(Error::invalid(
            "hop_length",
            format!("hop length must be finite and > 0, got {hop_length}"),
        ));
    }
    let norm = direction.0.hypot(direction.1);
    if !(norm > 0.0) || !norm.is_finite() {
        return Err(Error::invalid("direction", "direction must be a nonzero vector"));
    }
    let (dx, dy) = (direction.0 / norm, direction.1 / norm);
    let node = |i: usize| {
        Point::new(
            origin.x + i as f64 * hop_length * dx,
            origin.y + i as f64 * hop_length * dy,
        )
    };
    let links = (0..hops)
        .map(|i| Link {
            tx: node(i),
            rx: node(i + 1),
        })
        .collect();
    ChainTopology::new(links)
}

/// Convenience: uniform chain from the origin along +x, the layout used
/// throughout the experiments.
pub fn uniform_chain_x(hops: usize, hop_length: f64) -> Result<ChainTopology> {
    uniform_chain(hops, hop_length, Point::ORIGIN, (1.0, 0.0))
}
