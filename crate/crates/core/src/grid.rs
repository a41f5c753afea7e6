//! 4-connected component labelling on row-major grids.

use crate::types::BinaryMask;

const NEIGHBOURS: [(isize, isize); 4] = [(-1, 0), (1, 0), (0, -1), (0, 1)];

/// Calls `f` with the flat index of every in-bounds 4-neighbour of `idx`.
#[inline]
pub(crate) fn for_each_neighbour(idx: usize, height: usize, width: usize, mut f: impl FnMut(usize)) {
    let r = (idx / width) as isize;
    let c = (idx % width) as isize;
    for (dr, dc) in NEIGHBOURS {
        let (nr, nc) = (r + dr, c + dc);
        if nr >= 0 && nc >= 0 && (nr as usize) < height && (nc as usize) < width {
            f(nr as usize * width + nc as usize);
        }
    }
}

/// Components of equal-valued 4-connected pixels.
///
/// Returns a component id per pixel (ids assigned in scan order of each
/// component's first pixel) and the size of every component.
pub fn label_components<T: PartialEq + Copy>(
    values: &[T],
    height: usize,
    width: usize,
) -> (Vec<usize>, Vec<usize>) {
    assert_eq!(values.len(), height * width, "grid size mismatch");
    let mut comp = vec![usize::MAX; values.len()];
    let mut sizes = Vec::new();
    let mut stack = Vec::new();
    for start in 0..values.len() {
        if comp[start] != usize::MAX {
            continue;
        }
        let id = sizes.len();
        let v = values[start];
        comp[start] = id;
        stack.push(start);
        let mut size = 0;
        while let Some(idx) = stack.pop() {
            size += 1;
            for_each_neighbour(idx, height, width, |n| {
                if comp[n] == usize::MAX && values[n] == v {
                    comp[n] = id;
                    stack.push(n);
                }
            });
        }
        sizes.push(size);
    }
    (comp, sizes)
}

/// Splits a mask into its 4-connected foreground components, in scan order.
pub fn mask_components(mask: &BinaryMask) -> Vec<BinaryMask> {
    let (h, w) = mask.dims();
    let (comp, sizes) = label_components(mask.bits(), h, w);
    let mut out: Vec<Option<BinaryMask>> = vec![None; sizes.len()];
    for (idx, &id) in comp.iter().enumerate() {
        if mask.get_index(idx) {
            out[id]
                .get_or_insert_with(|| BinaryMask::empty(h, w))
                .set(idx, true);
        }
    }
    out.into_iter().flatten().collect()
}

/// True when the foreground of `mask` is a single 4-connected component.
pub fn is_connected(mask: &BinaryMask) -> bool {
    mask_components(mask).len() == 1
}
