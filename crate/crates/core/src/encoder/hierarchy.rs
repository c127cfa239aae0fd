use std::collections::BTreeMap;

use super::code::{Code, CodeLayout};
use super::split::{k_split, two_split};
use super::{EncodeError, EncodingParams};
use crate::mesh::TriangleMesh;
use crate::par;

/// Per-vertex group labels for every splitting iteration.
///
/// Stored as one full code per vertex; the label at iteration `j` is digit
/// `j` of that code and the group of a vertex in `G_j` is identified by its
/// first `j` digits.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupingHierarchy {
    params: EncodingParams,
    layout: CodeLayout,
    codes: Vec<Code>,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for the split of one group, independent of the order in which
/// groups are processed.
fn group_seed(seed: u64, level: u32, prefix: Code) -> u64 {
    splitmix64(seed ^ splitmix64(((level as u64) << 56) ^ prefix))
}

/// Builds the `d`-level grouping of the mesh vertices.
///
/// Power-of-two radices are built as `d * log2(r)` binary levels and then
/// read back in radix `r`, so the leaf partition of `(r, d)` equals that of
/// `(2, d * log2 r)` for the same seed. Other radices split each group
/// directly into `r` balanced children.
pub fn build_hierarchy(
    mesh: &TriangleMesh,
    params: &EncodingParams,
) -> Result<GroupingHierarchy, EncodeError> {
    let layout = params.validate_for(mesh.vertex_count())?;
    let points = mesh.vertices();
    let n = points.len();

    let (levels, fan_out, shift) = if layout.is_power_of_two_radix() {
        (layout.total_bits(), 2usize, 1u32)
    } else {
        (layout.digits(), layout.radix() as usize, layout.bits_per_digit())
    };

    let mut work: Vec<(Code, Vec<u32>)> = vec![(0, (0..n as u32).collect())];
    for level in 0..levels {
        let children = par::map_slice(&work, |(prefix, idx)| {
            let s = group_seed(params.seed, level, *prefix);
            if fan_out == 2 {
                let [l, r] = two_split(points, idx, s);
                vec![l, r]
            } else {
                k_split(points, idx, fan_out, s)
            }
        });
        let mut next = Vec::with_capacity(work.len() * fan_out);
        for ((prefix, _), kids) in work.iter().zip(children) {
            for (c, members) in kids.into_iter().enumerate() {
                if !members.is_empty() {
                    next.push(((prefix << shift) | c as Code, members));
                }
            }
        }
        work = next;
    }

    let mut codes = vec![0; n];
    for (code, members) in &work {
        for &i in members {
            codes[i as usize] = *code;
        }
    }
    Ok(GroupingHierarchy {
        params: *params,
        layout,
        codes,
    })
}

impl GroupingHierarchy {
    pub fn params(&self) -> &EncodingParams {
        &self.params
    }

    pub fn layout(&self) -> CodeLayout {
        self.layout
    }

    pub fn vertex_count(&self) -> usize {
        self.codes.len()
    }

    /// Full code of every vertex, in vertex order.
    pub fn codes(&self) -> &[Code] {
        &self.codes
    }

    /// Class id `m_{i,j}` of vertex `i` at iteration `j` (1-based).
    pub fn class_id(&self, vertex: usize, j: u32) -> u32 {
        self.layout.digit(self.codes[vertex], j)
    }

    /// Class ids of all vertices at iteration `j`.
    pub fn level(&self, j: u32) -> Vec<u32> {
        self.codes.iter().map(|&c| self.layout.digit(c, j)).collect()
    }

    /// Groups of `G_j` keyed by their `j`-digit prefix, members ascending.
    /// `G_0` is the single group of all vertices.
    pub fn groups(&self, j: u32) -> BTreeMap<Code, Vec<u32>> {
        let mut out: BTreeMap<Code, Vec<u32>> = BTreeMap::new();
        for (i, &c) in self.codes.iter().enumerate() {
            out.entry(self.layout.prefix(c, j)).or_default().push(i as u32);
        }
        out
    }

    /// The same partition read as codes of another power-of-two radix.
    pub fn with_radix(&self, radix: u32) -> Result<Self, EncodeError> {
        let layout = relabel_layout(self.layout, radix)?;
        Ok(Self {
            params: EncodingParams {
                radix,
                digits: layout.digits(),
                seed: self.params.seed,
            },
            layout,
            codes: self.codes.clone(),
        })
    }
}

/// Layout with radix `radix` covering the same bits as `from`. Only valid
/// between power-of-two radices, where conversion is pure relabeling.
pub(super) fn relabel_layout(from: CodeLayout, radix: u32) -> Result<CodeLayout, EncodeError> {
    if !from.is_power_of_two_radix() {
        return Err(EncodeError::NotPowerOfTwo(from.radix()));
    }
    if !radix.is_power_of_two() || radix < 2 {
        return Err(EncodeError::NotPowerOfTwo(radix));
    }
    let group = radix.trailing_zeros();
    let bits = from.total_bits();
    if bits % group != 0 {
        return Err(EncodeError::IndivisibleLength {
            bits: bits as usize,
            group: group as usize,
        });
    }
    CodeLayout::new(radix, bits / group)
}
