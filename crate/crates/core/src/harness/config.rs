//! Scenario description for the synthetic benchmark.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::camera::CameraIntrinsics;
use crate::encoder::EncodingParams;
use crate::matcher::DEFAULT_RADIUS_PX;
use crate::mesh::{self, primitives, TriangleMesh};
use crate::pnp::SolverConfig;

use super::HarnessError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Builtin {
    Tetrahedron,
    Cube,
    Icosahedron,
}

/// Object geometry: a file or a built-in solid centered on the origin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MeshSpec {
    pub path: Option<PathBuf>,
    pub builtin: Option<Builtin>,
    /// Uniform scale. Built-ins have unit circumradius (icosahedron),
    /// unit side (cube) or unit half-diagonal (tetrahedron).
    pub scale: f64,
    /// Midpoint-subdivide until there are at least `r^d` vertices.
    pub upsample: bool,
}

impl Default for MeshSpec {
    fn default() -> Self {
        Self {
            path: None,
            builtin: Some(Builtin::Icosahedron),
            scale: 50.0,
            upsample: true,
        }
    }
}

impl MeshSpec {
    /// Loads or builds the mesh as specified, before any upsampling.
    pub fn load(&self) -> Result<TriangleMesh, HarnessError> {
        let base = match (&self.path, self.builtin) {
            (Some(p), None) => mesh::load_mesh(p)?,
            (None, Some(b)) => {
                let m = match b {
                    Builtin::Tetrahedron => primitives::tetrahedron(),
                    Builtin::Cube => primitives::cube(1.0),
                    Builtin::Icosahedron => primitives::icosahedron(1.0),
                };
                let c = m.centroid();
                TriangleMesh::new(
                    m.vertices().iter().map(|p| p - c.coords).collect(),
                    m.faces().to_vec(),
                )?
            }
            _ => return Err(HarnessError::Config("mesh needs exactly one of path or builtin".into())),
        };
        Ok(primitives::scaled(&base, [self.scale; 3]))
    }
}

/// Random object poses: uniform rotations, translations uniform in a box,
/// kept only when every vertex projects inside the image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PoseSamplerSpec {
    pub count: usize,
    pub seed: u64,
    pub x_mm: [f64; 2],
    pub y_mm: [f64; 2],
    pub z_mm: [f64; 2],
}

impl Default for PoseSamplerSpec {
    fn default() -> Self {
        Self {
            count: 100,
            seed: 0,
            x_mm: [-30.0, 30.0],
            y_mm: [-30.0, 30.0],
            z_mm: [450.0, 600.0],
        }
    }
}

/// Synthetic prediction errors applied to rendered code maps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorruptionSpec {
    /// Flip probability of each code bit, most significant first. Empty
    /// means no flips; otherwise one entry per bit.
    pub bit_flip: Vec<f64>,
    /// Square structuring element radius for mask erosion.
    pub erosion_px: u32,
    /// Rate at which masked pixels are replaced by codes absent from the
    /// lookup table. Has no effect when every code has a leaf.
    pub unknown_rate: f64,
    pub seed: u64,
}

impl Default for CorruptionSpec {
    fn default() -> Self {
        Self {
            bit_flip: Vec::new(),
            erosion_px: 0,
            unknown_rate: 0.0,
            seed: 0,
        }
    }
}

impl CorruptionSpec {
    /// `p` on the listed 1-based bits, zero elsewhere.
    pub fn flips_on(bits: u32, positions: impl IntoIterator<Item = u32>, p: f64) -> Self {
        let mut bit_flip = vec![0.0; bits as usize];
        for b in positions {
            bit_flip[b as usize - 1] = p;
        }
        Self {
            bit_flip,
            ..Self::default()
        }
    }

    /// Per-bit probabilities padded to `bits` entries.
    pub fn probabilities(&self, bits: u32) -> Vec<f64> {
        if self.bit_flip.is_empty() {
            vec![0.0; bits as usize]
        } else {
            self.bit_flip.clone()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FilterMode {
    Off,
    On,
    Both,
}

impl FilterMode {
    pub fn settings(self) -> &'static [bool] {
        match self {
            FilterMode::Off => &[false],
            FilterMode::On => &[true],
            FilterMode::Both => &[false, true],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterSpec {
    pub mode: FilterMode,
    pub radius_px: f64,
    /// Fixed spread threshold; calibrated from clean renders when absent.
    pub max_spread_mm: Option<f64>,
}

impl Default for FilterSpec {
    fn default() -> Self {
        Self {
            mode: FilterMode::Both,
            radius_px: DEFAULT_RADIUS_PX,
            max_spread_mm: None,
        }
    }
}

/// Which ablations to run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblationSpec {
    /// Binary code lengths for the truncation curve; empty means all.
    pub truncation: Vec<u32>,
    /// Radices for the solver comparison; empty means every power of two
    /// up to 256 whose digit width divides the code length.
    pub radices: Vec<u32>,
}

impl Default for AblationSpec {
    fn default() -> Self {
        Self {
            truncation: Vec::new(),
            radices: Vec::new(),
        }
    }
}

fn default_camera() -> CameraIntrinsics {
    CameraIntrinsics {
        fx: 300.0,
        fy: 300.0,
        cx: 64.0,
        cy: 64.0,
        width: 128,
        height: 128,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub mesh: MeshSpec,
    pub encoding: EncodingParams,
    pub camera: CameraIntrinsics,
    pub poses: PoseSamplerSpec,
    pub corruption: CorruptionSpec,
    pub solver: SolverConfig,
    pub filter: FilterSpec,
    pub ablation: AblationSpec,
    pub output: Option<PathBuf>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            mesh: MeshSpec::default(),
            encoding: EncodingParams::default(),
            camera: default_camera(),
            poses: PoseSamplerSpec::default(),
            corruption: CorruptionSpec::default(),
            solver: SolverConfig::default(),
            filter: FilterSpec::default(),
            ablation: AblationSpec::default(),
            output: None,
        }
    }
}

impl ScenarioConfig {
    /// Sets every seed in the scenario to `seed`.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.encoding.seed = seed;
        self.poses.seed = seed;
        self.corruption.seed = seed;
        self.solver.seed = seed;
        self
    }

    /// Total code bits, `d * log2 r`.
    pub fn code_bits(&self) -> u32 {
        self.encoding.digits * self.encoding.radix.trailing_zeros()
    }

    pub fn truncation_levels(&self) -> Vec<u32> {
        if self.ablation.truncation.is_empty() {
            (1..=self.code_bits()).collect()
        } else {
            self.ablation.truncation.clone()
        }
    }

    pub fn radices(&self) -> Vec<u32> {
        if self.ablation.radices.is_empty() {
            let bits = self.code_bits();
            (1..=8).filter(|k| bits % k == 0).map(|k| 1u32 << k).collect()
        } else {
            self.ablation.radices.clone()
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Config(m));
        if self.mesh.path.is_some() == self.mesh.builtin.is_some() {
            return bad("mesh needs exactly one of path or builtin".into());
        }
        if !(self.mesh.scale > 0.0 && self.mesh.scale.is_finite()) {
            return bad(format!("mesh scale {} must be positive", self.mesh.scale));
        }
        let r = self.encoding.radix;
        if !(2..=256).contains(&r) || !r.is_power_of_two() {
            return bad(format!("radix {r} must be a power of two in [2, 256]"));
        }
        self.encoding.layout()?;
        self.camera.validate()?;
        self.solver.validate()?;
        if self.poses.count < 1 {
            return bad("pose count must be at least 1".into());
        }
        for (name, [lo, hi]) in [("x_mm", self.poses.x_mm), ("y_mm", self.poses.y_mm), ("z_mm", self.poses.z_mm)] {
            if !(lo <= hi && lo.is_finite() && hi.is_finite()) {
                return bad(format!("pose range {name} = [{lo}, {hi}] is empty"));
            }
        }
        if !(self.poses.z_mm[0] > 0.0) {
            return bad("pose z range must lie in front of the camera".into());
        }
        let bits = self.code_bits();
        let c = &self.corruption;
        if !c.bit_flip.is_empty() && c.bit_flip.len() != bits as usize {
            return bad(format!("bit_flip has {} entries, codes have {bits} bits", c.bit_flip.len()));
        }
        if let Some(p) = c.bit_flip.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return bad(format!("flip probability {p} outside [0, 1]"));
        }
        if !(0.0..=1.0).contains(&c.unknown_rate) {
            return bad(format!("unknown_rate {} outside [0, 1]", c.unknown_rate));
        }
        if !(self.filter.radius_px > 0.0) {
            return bad("filter radius must be positive".into());
        }
        if let Some(s) = self.filter.max_spread_mm {
            if !(s > 0.0) {
                return bad("max_spread_mm must be positive".into());
            }
        }
        if let Some(j) = self.truncation_levels().iter().find(|&&j| j < 1 || j > bits) {
            return bad(format!("truncation length {j} outside [1, {bits}]"));
        }
        for q in self.radices() {
            let k = q.trailing_zeros();
            if !q.is_power_of_two() || !(1..=8).contains(&k) || bits % k != 0 {
                return bad(format!("radix {q} cannot relabel {bits}-bit codes"));
            }
        }
        Ok(())
    }
}
