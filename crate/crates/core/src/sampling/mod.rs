//! Random measurement frames driven by per-qubit LFSR streams.

mod lfsr;
mod tetra;
mod virtual_z;

use std::f64::consts::{FRAC_PI_2, PI, TAU};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Mat2};

pub(crate) use lfsr::splitmix64;
pub use lfsr::{batch_streams, maximal_taps, Lfsr};
pub use tetra::{haar_two_copy_average, tetra_two_copy_average, tetrahedral_group, TetraElement};
pub use virtual_z::{phases_for_direction, virtual_z_decompose, virtual_z_unitary};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplerKind {
    Spherical,
    PoleConcentrated,
    Tetrahedral,
}

impl SamplerKind {
    pub const ALL: [SamplerKind; 3] = [
        SamplerKind::Spherical,
        SamplerKind::PoleConcentrated,
        SamplerKind::Tetrahedral,
    ];

    /// LFSR words consumed per qubit per shot.
    pub fn words_per_qubit(self) -> usize {
        match self {
            SamplerKind::Tetrahedral => 1,
            _ => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SamplerKind::Spherical => "spherical",
            SamplerKind::PoleConcentrated => "pole_concentrated",
            SamplerKind::Tetrahedral => "tetrahedral",
        }
    }

    /// Whether single-shot estimators carry the `(pi/2) sin(theta)` weight.
    pub fn is_weighted(self) -> bool {
        self == SamplerKind::PoleConcentrated
    }
}

impl fmt::Display for SamplerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SamplerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "spherical" => Ok(SamplerKind::Spherical),
            "pole_concentrated" | "pole" => Ok(SamplerKind::PoleConcentrated),
            "tetrahedral" | "tetra" => Ok(SamplerKind::Tetrahedral),
            other => Err(Error::Config(format!("unknown sampler {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Axis {
    Direction,
    Pole { theta: f64, phi: f64, weight: f64 },
    Tetra { index: u8 },
}

/// One qubit's measurement specification.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FrameEntry {
    pub axis: Axis,
    /// Unit Bloch vector of the measured observable `n . sigma`.
    pub direction: [f64; 3],
    /// Virtual-Z phases `(alpha, beta)`.
    pub phases: (f64, f64),
}

impl FrameEntry {
    pub fn direction(n: [f64; 3]) -> Result<Self> {
        let norm = (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt();
        if (norm - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidPlan(format!("direction {n:?} is not unit length")));
        }
        Ok(Self {
            axis: Axis::Direction,
            direction: n,
            phases: phases_for_direction(n),
        })
    }

    pub fn pole(theta: f64, phi: f64) -> Self {
        let (st, ct) = theta.sin_cos();
        let (sp, cp) = phi.sin_cos();
        Self {
            axis: Axis::Pole {
                theta,
                phi,
                weight: FRAC_PI_2 * st,
            },
            direction: [st * cp, st * sp, ct],
            phases: (-phi, PI - theta),
        }
    }

    pub fn tetra(index: u8) -> Self {
        let g = &tetrahedral_group()[index as usize];
        Self {
            axis: Axis::Tetra { index },
            direction: g.direction,
            phases: g.phases,
        }
    }

    pub fn kind(&self) -> SamplerKind {
        match self.axis {
            Axis::Direction => SamplerKind::Spherical,
            Axis::Pole { .. } => SamplerKind::PoleConcentrated,
            Axis::Tetra { .. } => SamplerKind::Tetrahedral,
        }
    }

    /// Kernel weight: `(pi/2) sin(theta)` for pole frames, 1 otherwise.
    pub fn weight(&self) -> f64 {
        match self.axis {
            Axis::Pole { weight, .. } => weight,
            _ => 1.0,
        }
    }

    /// Pre-measurement gate rebuilt from the virtual-Z phases. It agrees with
    /// [`FrameEntry::gate`] up to a Z rotation before the measurement.
    pub fn unitary(&self) -> Mat2 {
        virtual_z_unitary(self.phases.0, self.phases.1)
    }

    /// The frame's rotation `V` with `V^dag Z V = n . sigma`: the group element
    /// for tetrahedral frames, the shortest rotation taking `n` to `+z`
    /// otherwise. A readout channel acts after this gate.
    pub fn gate(&self) -> Mat2 {
        match self.axis {
            Axis::Tetra { index } => tetrahedral_group()[index as usize].unitary,
            _ => shortest_rotation_to_z(self.direction),
        }
    }
}

fn shortest_rotation_to_z(n: [f64; 3]) -> Mat2 {
    let s = n[0].hypot(n[1]);
    if s < 1e-15 {
        return if n[2] > 0.0 { Mat2::identity() } else { linalg::rx(PI) };
    }
    let angle = n[2].clamp(-1.0, 1.0).acos();
    linalg::rotation([n[1] / s, -n[0] / s, 0.0], angle)
}

#[derive(Clone, Debug, PartialEq)]
pub struct MeasurementFrame {
    pub entries: Vec<FrameEntry>,
}

impl MeasurementFrame {
    pub fn n_qubits(&self) -> usize {
        self.entries.len()
    }

    /// Every qubit measured along `+z`.
    pub fn computational(n_qubits: usize) -> Self {
        Self {
            entries: vec![FrameEntry::tetra(0); n_qubits],
        }
    }

    /// The common sampler kind of all entries.
    pub fn kind(&self) -> Option<SamplerKind> {
        let first = self.entries.first()?.kind();
        self.entries.iter().all(|e| e.kind() == first).then_some(first)
    }
}

/// Raw LFSR words behind one qubit's frame entry.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub struct FrameCode {
    pub w0: u32,
    pub w1: u32,
}

impl FrameCode {
    pub fn draw(kind: SamplerKind, g: &mut Lfsr) -> Self {
        let w0 = g.next_word() as u32;
        let w1 = if kind.words_per_qubit() == 2 {
            g.next_word() as u32
        } else {
            0
        };
        Self { w0, w1 }
    }

    /// Direction and kernel weight only; the hot path of the simulator.
    #[inline]
    pub fn direction(self, kind: SamplerKind, width: u32) -> ([f64; 3], f64) {
        let scale = (1u64 << width) as f64;
        match kind {
            SamplerKind::Spherical => {
                let phi = TAU * self.w0 as f64 / scale;
                let ct = 1.0 - 2.0 * self.w1 as f64 / scale;
                let st = (1.0 - ct * ct).max(0.0).sqrt();
                let (sp, cp) = phi.sin_cos();
                ([st * cp, st * sp, ct], 1.0)
            }
            SamplerKind::PoleConcentrated => {
                let phi = TAU * self.w0 as f64 / scale;
                let theta = PI * self.w1 as f64 / scale;
                let (st, ct) = theta.sin_cos();
                let (sp, cp) = phi.sin_cos();
                ([st * cp, st * sp, ct], FRAC_PI_2 * st)
            }
            SamplerKind::Tetrahedral => (tetrahedral_group()[self.tetra_index(width) as usize].direction, 1.0),
        }
    }

    #[inline]
    pub fn tetra_index(self, width: u32) -> u8 {
        ((self.w0 as u64 * 12) >> width) as u8
    }

    pub fn decode(self, kind: SamplerKind, width: u32) -> FrameEntry {
        let scale = (1u64 << width) as f64;
        match kind {
            SamplerKind::Spherical => {
                let (n, _) = self.direction(kind, width);
                let theta = n[2].clamp(-1.0, 1.0).acos();
                let phi = TAU * self.w0 as f64 / scale;
                FrameEntry {
                    axis: Axis::Direction,
                    direction: n,
                    phases: (-phi, PI - theta),
                }
            }
            SamplerKind::PoleConcentrated => {
                FrameEntry::pole(PI * self.w1 as f64 / scale, TAU * self.w0 as f64 / scale)
            }
            SamplerKind::Tetrahedral => FrameEntry::tetra(self.tetra_index(width)),
        }
    }
}

/// Draws one frame, consuming words from each qubit's stream in qubit order.
pub fn sample_frame(kind: SamplerKind, streams: &mut [Lfsr]) -> MeasurementFrame {
    MeasurementFrame {
        entries: streams
            .iter_mut()
            .map(|g| {
                let width = g.width();
                FrameCode::draw(kind, g).decode(kind, width)
            })
            .collect(),
    }
}
