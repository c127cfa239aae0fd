use std::collections::BTreeSet;

use proptest::prelude::*;
use surfcode::encoder::{build_codebook, build_hierarchy, radix_convert, radix_expand, CodeLayout};
use surfcode::mesh::{primitives, upsample_until};
use surfcode::EncodingParams;

fn layouts() -> impl Strategy<Value = CodeLayout> {
    prop_oneof![
        (1u32..=64).prop_map(|d| CodeLayout::new(2, d).unwrap()),
        (1u32..=32).prop_map(|d| CodeLayout::new(4, d).unwrap()),
        (1u32..=8).prop_map(|d| CodeLayout::new(256, d).unwrap()),
        (1u32..=10).prop_map(|d| CodeLayout::new(10, d).unwrap()),
    ]
}

fn layout_and_code() -> impl Strategy<Value = (CodeLayout, u64)> {
    layouts().prop_flat_map(|l| {
        let digits = proptest::collection::vec(0..l.radix(), l.digits() as usize);
        (Just(l), digits).prop_map(|(l, ds)| (l, l.from_digits(&ds).unwrap()))
    })
}

proptest! {
    #[test]
    fn pack_unpack_round_trip((layout, code) in layout_and_code()) {
        let mut buf = Vec::new();
        layout.pack(code, &mut buf);
        prop_assert_eq!(buf.len(), layout.packed_len());
        prop_assert_eq!(layout.unpack(&buf), code);
    }

    #[test]
    fn digits_round_trip((layout, code) in layout_and_code()) {
        let ds = layout.to_digits(code);
        prop_assert_eq!(ds.len(), layout.digits() as usize);
        prop_assert!(ds.iter().all(|&d| d < layout.radix()));
        prop_assert_eq!(layout.from_digits(&ds).unwrap(), code);
        prop_assert!(layout.is_valid(code));
    }

    #[test]
    fn prefix_keeps_leading_digits((layout, code) in layout_and_code(), j in 0u32..=64) {
        let j = j.min(layout.digits());
        let p = layout.prefix(code, j);
        let t = layout.truncated(j.max(1));
        if j > 0 {
            let t = t.unwrap();
            prop_assert_eq!(t.to_digits(p), layout.to_digits(code)[..j as usize].to_vec());
        }
    }

    #[test]
    fn radix_regrouping_round_trips(
        k in 0u32..4,
        groups in 1usize..8,
        seed in any::<u64>(),
    ) {
        let r = [2u32, 4, 16, 256][k as usize];
        let b = r.trailing_zeros() as usize;
        let bits: Vec<u32> = (0..groups * b).map(|i| ((seed >> (i % 64)) & 1) as u32).collect();
        let ds = radix_convert(&bits, r).unwrap();
        prop_assert_eq!(ds.len(), groups);
        prop_assert_eq!(radix_expand(&ds, r).unwrap(), bits);
    }
}

#[test]
fn hierarchy_is_balanced_and_codes_are_unique() {
    let mesh = upsample_until(&primitives::icosahedron(40.0), 600);
    for (r, d) in [(2, 9), (4, 4), (8, 3), (3, 5)] {
        let params = EncodingParams::new(r, d, 5);
        let h = build_hierarchy(&mesh, &params).unwrap();
        let layout = h.layout();
        for j in 1..=layout.digits() {
            let sizes: Vec<usize> = h.groups(j).values().map(Vec::len).collect();
            let (lo, hi) = (sizes.iter().min().unwrap(), sizes.iter().max().unwrap());
            assert!(hi - lo <= 1, "r={r} level {j}: sizes {lo}..{hi}");
        }
        let book = build_codebook(&mesh, &h).unwrap();
        let leaves: BTreeSet<u64> = book.vertex_codes().iter().copied().collect();
        assert_eq!(leaves.len(), book.table().len());
        for (v, &c) in book.vertex_codes().iter().enumerate() {
            assert_eq!(book.encode(v), c);
            assert!(book.decode(c).is_some());
        }
    }
}

#[test]
fn hierarchy_is_seed_deterministic() {
    let mesh = upsample_until(&primitives::cube(30.0), 300);
    let p = EncodingParams::new(2, 8, 42);
    let a = build_hierarchy(&mesh, &p).unwrap();
    let b = build_hierarchy(&mesh, &p).unwrap();
    assert_eq!(a.codes(), b.codes());
    let ba = build_codebook(&mesh, &a).unwrap();
    let bb = build_codebook(&mesh, &b).unwrap();
    assert_eq!(ba.fingerprint(), bb.fingerprint());
}

#[test]
fn truncated_book_maps_prefixes_to_group_centroids() {
    let mesh = upsample_until(&primitives::icosahedron(25.0), 300);
    let h = build_hierarchy(&mesh, &EncodingParams::new(2, 8, 1)).unwrap();
    let book = build_codebook(&mesh, &h).unwrap();
    let t = book.truncate(4).unwrap();
    assert_eq!(t.table().len(), 16);
    for (prefix, members) in h.groups(4) {
        let n = members.len() as f64;
        let c = members
            .iter()
            .fold(nalgebra::Vector3::zeros(), |a, &i| a + mesh.vertices()[i as usize].coords)
            / n;
        let got = t.decode(prefix).unwrap();
        assert!((got.coords - c).norm() < 1e-9);
    }
}
