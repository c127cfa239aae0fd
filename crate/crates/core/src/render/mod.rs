//! Flat-shaded, z-buffered rasterization of code labels.

mod codemap;
mod raster;

use thiserror::Error;

use crate::camera::{CameraIntrinsics, PoseSE3};
use crate::encoder::{Code, CodeLayout, Codebook};
use crate::mesh::TriangleMesh;
use crate::par;

pub use codemap::CodeMap;
pub use raster::{rasterize, FaceBuffer};

#[derive(Debug, Error, PartialEq)]
pub enum RenderError {
    #[error("codebook was built for a different mesh (fingerprint mismatch)")]
    FingerprintMismatch,
    #[error("codebook has {codebook} vertex codes but the mesh has {mesh} vertices")]
    VertexCountMismatch { codebook: usize, mesh: usize },
    #[error(transparent)]
    Camera(#[from] crate::camera::CameraError),
}

/// Class id of a face at one grouping level: the id shared by any two of its
/// vertices, otherwise the first vertex's id.
pub fn face_class_id(ids: [u32; 3]) -> u32 {
    let [a, b, c] = ids;
    if a == b || a == c {
        a
    } else if b == c {
        b
    } else {
        a
    }
}

/// Code of a face: `face_class_id` applied at every level, digits stacked.
pub fn face_code(layout: &CodeLayout, vertex_codes: [Code; 3]) -> Code {
    let bits = layout.bits_per_digit();
    (1..=layout.digits()).fold(0, |acc, j| {
        let ids = vertex_codes.map(|c| layout.digit(c, j));
        (acc << bits) | face_class_id(ids) as Code
    })
}

/// Renders code maps of one mesh; face codes are computed once.
#[derive(Debug, Clone)]
pub struct CodeRenderer<'a> {
    mesh: &'a TriangleMesh,
    layout: CodeLayout,
    face_codes: Vec<Code>,
}

impl<'a> CodeRenderer<'a> {
    pub fn new(mesh: &'a TriangleMesh, codebook: &Codebook) -> Result<Self, RenderError> {
        if codebook.vertex_codes().len() != mesh.vertex_count() {
            return Err(RenderError::VertexCountMismatch {
                codebook: codebook.vertex_codes().len(),
                mesh: mesh.vertex_count(),
            });
        }
        if codebook.fingerprint() != &mesh.fingerprint() {
            return Err(RenderError::FingerprintMismatch);
        }
        let layout = codebook.layout();
        let codes = codebook.vertex_codes();
        let face_codes = par::map_slice(mesh.faces(), |f| {
            face_code(&layout, f.map(|i| codes[i as usize]))
        });
        Ok(Self {
            mesh,
            layout,
            face_codes,
        })
    }

    pub fn layout(&self) -> CodeLayout {
        self.layout
    }

    pub fn face_codes(&self) -> &[Code] {
        &self.face_codes
    }

    /// Code map with depth. Pixels not covered by any face are unmasked and
    /// carry depth 0.
    pub fn render(&self, pose: &PoseSE3, cam: &CameraIntrinsics) -> Result<CodeMap, RenderError> {
        cam.validate()?;
        let fb = rasterize(self.mesh, pose, cam);
        let codes = fb
            .face
            .iter()
            .map(|f| f.map(|f| self.face_codes[f as usize]))
            .collect();
        Ok(CodeMap::from_parts(
            cam.width,
            cam.height,
            self.layout,
            codes,
            Some(fb.depth),
        ))
    }

    /// Class-id image of level `j` rendered on its own: each face takes
    /// `face_class_id` of its vertices' level-`j` ids.
    pub fn render_level(
        &self,
        codebook: &Codebook,
        j: u32,
        pose: &PoseSE3,
        cam: &CameraIntrinsics,
    ) -> Result<Vec<Option<u32>>, RenderError> {
        cam.validate()?;
        let fb = rasterize(self.mesh, pose, cam);
        let codes = codebook.vertex_codes();
        Ok(fb
            .face
            .iter()
            .map(|f| {
                f.map(|f| {
                    let face = self.mesh.faces()[f as usize];
                    face_class_id(face.map(|i| self.layout.digit(codes[i as usize], j)))
                })
            })
            .collect())
    }
}

/// One-shot convenience wrapper around [`CodeRenderer`].
pub fn render_code_map(
    mesh: &TriangleMesh,
    codebook: &Codebook,
    pose: &PoseSE3,
    cam: &CameraIntrinsics,
) -> Result<CodeMap, RenderError> {
    CodeRenderer::new(mesh, codebook)?.render(pose, cam)
}
