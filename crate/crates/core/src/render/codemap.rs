use crate::encoder::{Code, CodeLayout};

/// Per-pixel codes with a visibility mask and optional depth.
///
/// A pixel is masked exactly when it carries a code, so the mask is derived
/// from `codes` rather than stored separately.
#[derive(Debug, Clone, PartialEq)]
pub struct CodeMap {
    width: u32,
    height: u32,
    layout: CodeLayout,
    codes: Vec<Option<Code>>,
    depth: Option<Vec<f32>>,
}

impl CodeMap {
    pub fn empty(width: u32, height: u32, layout: CodeLayout) -> Self {
        Self {
            width,
            height,
            layout,
            codes: vec![None; width as usize * height as usize],
            depth: None,
        }
    }

    /// Row-major codes; panics if sizes disagree.
    pub fn from_parts(
        width: u32,
        height: u32,
        layout: CodeLayout,
        codes: Vec<Option<Code>>,
        depth: Option<Vec<f32>>,
    ) -> Self {
        let n = width as usize * height as usize;
        assert_eq!(codes.len(), n, "code buffer size");
        if let Some(d) = &depth {
            assert_eq!(d.len(), n, "depth buffer size");
        }
        Self {
            width,
            height,
            layout,
            codes,
            depth,
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn layout(&self) -> CodeLayout {
        self.layout
    }

    pub fn pixel_count(&self) -> usize {
        self.codes.len()
    }

    fn index(&self, u: u32, v: u32) -> usize {
        v as usize * self.width as usize + u as usize
    }

    pub fn code(&self, u: u32, v: u32) -> Option<Code> {
        self.codes[self.index(u, v)]
    }

    pub fn set_code(&mut self, u: u32, v: u32, code: Option<Code>) {
        let i = self.index(u, v);
        self.codes[i] = code;
    }

    pub fn is_masked(&self, u: u32, v: u32) -> bool {
        self.code(u, v).is_some()
    }

    pub fn codes(&self) -> &[Option<Code>] {
        &self.codes
    }

    pub fn codes_mut(&mut self) -> &mut [Option<Code>] {
        &mut self.codes
    }

    pub fn mask(&self) -> Vec<bool> {
        self.codes.iter().map(Option::is_some).collect()
    }

    pub fn masked_count(&self) -> usize {
        self.codes.iter().filter(|c| c.is_some()).count()
    }

    pub fn depth(&self) -> Option<&[f32]> {
        self.depth.as_deref()
    }

    pub fn set_depth(&mut self, depth: Option<Vec<f32>>) {
        if let Some(d) = &depth {
            assert_eq!(d.len(), self.codes.len(), "depth buffer size");
        }
        self.depth = depth;
    }

    /// Class-id image of grouping level `j` (1-based).
    pub fn level(&self, j: u32) -> Vec<Option<u32>> {
        self.codes
            .iter()
            .map(|c| c.map(|c| self.layout.digit(c, j)))
            .collect()
    }

    /// Same pixels read through another layout (e.g. after radix relabeling).
    pub fn with_layout(mut self, layout: CodeLayout) -> Self {
        self.layout = layout;
        self
    }

    /// Nearest-neighbor resampling of codes and depth. Codes are never
    /// blended: every output code is copied from some input pixel.
    pub fn resize_nearest(&self, width: u32, height: u32) -> CodeMap {
        assert!(width > 0 && height > 0, "target size must be positive");
        let sx = self.width as f64 / width as f64;
        let sy = self.height as f64 / height as f64;
        let src_x: Vec<u32> = (0..width)
            .map(|x| (((x as f64 + 0.5) * sx).floor() as u32).min(self.width - 1))
            .collect();
        let src_y: Vec<u32> = (0..height)
            .map(|y| (((y as f64 + 0.5) * sy).floor() as u32).min(self.height - 1))
            .collect();
        let mut codes = Vec::with_capacity(width as usize * height as usize);
        let mut depth = self.depth.as_ref().map(|_| Vec::with_capacity(codes.capacity()));
        for &y in &src_y {
            for &x in &src_x {
                let i = self.index(x, y);
                codes.push(self.codes[i]);
                if let (Some(out), Some(src)) = (depth.as_mut(), self.depth.as_ref()) {
                    out.push(src[i]);
                }
            }
        }
        CodeMap {
            width,
            height,
            layout: self.layout,
            codes,
            depth,
        }
    }
}
