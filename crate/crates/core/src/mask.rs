//! Binary raster masks and the morphology primitives the corridor
//! post-processing is built from.

/// Binary raster with values {0, 1}, row-major, same dimensions as the
/// camera image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    pub width: u32,
    pub height: u32,
    data: Vec<u8>,
}

impl Mask {
    pub fn new(width: u32, height: u32) -> Self {
        Mask {
            width,
            height,
            data: vec![0; width as usize * height as usize],
        }
    }

    pub fn from_raw(width: u32, height: u32, data: Vec<u8>) -> Self {
        assert_eq!(data.len(), width as usize * height as usize);
        debug_assert!(data.iter().all(|&v| v <= 1));
        Mask {
            width,
            height,
            data,
        }
    }

    #[inline]
    pub fn get(&self, col: u32, row: u32) -> bool {
        self.data[row as usize * self.width as usize + col as usize] != 0
    }

    #[inline]
    pub fn set(&mut self, col: u32, row: u32, value: bool) {
        self.data[row as usize * self.width as usize + col as usize] = value as u8;
    }

    pub fn as_raw(&self) -> &[u8] {
        &self.data
    }

    pub fn row(&self, row: u32) -> &[u8] {
        let w = self.width as usize;
        &self.data[row as usize * w..(row as usize + 1) * w]
    }

    pub fn row_mut(&mut self, row: u32) -> &mut [u8] {
        let w = self.width as usize;
        &mut self.data[row as usize * w..(row as usize + 1) * w]
    }

    pub fn count_set(&self) -> usize {
        self.data.iter().map(|&v| v as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.data.iter().all(|&v| v == 0)
    }

    /// True when `self` is a pixelwise subset of `other`.
    pub fn is_subset_of(&self, other: &Mask) -> bool {
        self.width == other.width
            && self.height == other.height
            && self
                .data
                .iter()
                .zip(&other.data)
                .all(|(&a, &b)| a == 0 || b != 0)
    }

    /// Index of the topmost (smallest row) set pixel, if any.
    pub fn top_row(&self) -> Option<u32> {
        (0..self.height).find(|&r| self.row(r).iter().any(|&v| v != 0))
    }

    /// Clears every pixel at rows strictly above `cut_row` (fractional image
    /// row); rows at and below it are unchanged.
    pub fn truncate_above_row(&self, cut_row: f64) -> Mask {
        let mut out = self.clone();
        let last_cleared = cut_row.ceil() as i64 - 1; // rows r with r < cut_row
        let end = last_cleared.clamp(-1, self.height as i64 - 1);
        for r in 0..=end {
            if r >= 0 {
                out.row_mut(r as u32).fill(0);
            }
        }
        out
    }

    /// 8-connected component labels; 0 = background. Returns the label
    /// raster and the number of components.
    pub fn label_components(&self) -> (Vec<u32>, u32) {
        let w = self.width as usize;
        let h = self.height as usize;
        let mut labels = vec![0u32; w * h];
        let mut next = 0u32;
        let mut stack: Vec<(usize, usize)> = Vec::new();
        for sr in 0..h {
            for sc in 0..w {
                let idx = sr * w + sc;
                if self.data[idx] == 0 || labels[idx] != 0 {
                    continue;
                }
                next += 1;
                labels[idx] = next;
                stack.push((sc, sr));
                while let Some((c, r)) = stack.pop() {
                    for dr in -1i64..=1 {
                        for dc in -1i64..=1 {
                            if dr == 0 && dc == 0 {
                                continue;
                            }
                            let nc = c as i64 + dc;
                            let nr = r as i64 + dr;
                            if nc < 0 || nr < 0 || nc >= w as i64 || nr >= h as i64 {
                                continue;
                            }
                            let nidx = nr as usize * w + nc as usize;
                            if self.data[nidx] != 0 && labels[nidx] == 0 {
                                labels[nidx] = next;
                                stack.push((nc as usize, nr as usize));
                            }
                        }
                    }
                }
            }
        }
        (labels, next)
    }

    /// Keeps the 8-connected component intersecting the anchor region
    /// (bottom 5% of rows, central third of columns). Empty if none does.
    /// Implemented over row runs with union-find, so cost scales with the
    /// number of runs rather than pixel-by-pixel flood fill.
    pub fn select_anchor_component(&self) -> Mask {
        let h = self.height as usize;
        let mut starts: Vec<u32> = Vec::new();
        let mut ends: Vec<u32> = Vec::new();
        let mut row_off: Vec<u32> = Vec::with_capacity(h + 1);
        row_off.push(0);
        for r in 0..h {
            scan_runs(self.row(r as u32), &mut starts, &mut ends);
            row_off.push(starts.len() as u32);
        }
        if starts.is_empty() {
            return Mask::new(self.width, self.height);
        }
        let mut parent: Vec<u32> = (0..starts.len() as u32).collect();
        for r in 1..h {
            let mut i = row_off[r - 1] as usize;
            let pi_end = row_off[r] as usize;
            let mut j = row_off[r] as usize;
            let cj_end = row_off[r + 1] as usize;
            // two-pointer sweep: runs [s, e) on adjacent rows touch
            // 8-connectedly iff s_prev <= e_cur and s_cur <= e_prev
            while i < pi_end && j < cj_end {
                if starts[i] <= ends[j] && starts[j] <= ends[i] {
                    union(&mut parent, i as u32, j as u32);
                }
                if ends[i] <= ends[j] {
                    i += 1;
                } else {
                    j += 1;
                }
            }
        }
        let row0 = (self.height as f64 * 0.95).floor() as usize;
        let col0 = self.width / 3;
        let col1 = 2 * self.width / 3;
        let mut root = None;
        'anchor: for r in row0..h {
            for idx in row_off[r]..row_off[r + 1] {
                if starts[idx as usize] < col1 && ends[idx as usize] > col0 {
                    root = Some(find(&mut parent, idx));
                    break 'anchor;
                }
            }
        }
        let Some(root) = root else {
            return Mask::new(self.width, self.height);
        };
        let mut out = Mask::new(self.width, self.height);
        for r in 0..h {
            for idx in row_off[r]..row_off[r + 1] {
                if find(&mut parent, idx) == root {
                    let (s, e) = (starts[idx as usize] as usize, ends[idx as usize] as usize);
                    out.row_mut(r as u32)[s..e].fill(1);
                }
            }
        }
        out
    }

    /// Morphological dilation with a disk of the given radius. Contributions
    /// outside the frame are clipped. The disk is decomposed into one
    /// horizontal extent per row offset, so every pass is a shifted
    /// elementwise OR over whole rows.
    pub fn dilate_disk(&self, radius: u32) -> Mask {
        if radius == 0 {
            return self.clone();
        }
        let r = radius as i64;
        let h = self.height as i64;
        let mut out = Mask::new(self.width, self.height);
        let mut tmp = vec![0u8; self.width as usize];
        for sr in 0..h {
            let src = self.row(sr as u32);
            for dr in 0..=r {
                let e = isqrt(r * r - dr * dr);
                hdilate(src, &mut tmp, e as usize);
                for tr in [sr - dr, sr + dr] {
                    if (0..h).contains(&tr) {
                        for (d, &s) in out.row_mut(tr as u32).iter_mut().zip(&tmp) {
                            *d |= s;
                        }
                    }
                    if dr == 0 {
                        break; // same target row twice
                    }
                }
            }
        }
        out
    }

    /// Morphological erosion with a disk. Pixels outside the frame count as
    /// set, so shapes touching the image border are not eaten from outside.
    /// Same row-wise decomposition as `dilate_disk`, with AND in place of OR
    /// and missing rows contributing nothing.
    pub fn erode_disk(&self, radius: u32) -> Mask {
        if radius == 0 {
            return self.clone();
        }
        let r = radius as i64;
        let h = self.height as i64;
        let n = self.width as usize * self.height as usize;
        let mut out = Mask::from_raw(self.width, self.height, vec![1; n]);
        let mut tmp = vec![0u8; self.width as usize];
        for sr in 0..h {
            let src = self.row(sr as u32);
            for dr in 0..=r {
                let e = isqrt(r * r - dr * dr);
                herode(src, &mut tmp, e as usize);
                for tr in [sr - dr, sr + dr] {
                    if (0..h).contains(&tr) {
                        for (d, &s) in out.row_mut(tr as u32).iter_mut().zip(&tmp) {
                            *d &= s;
                        }
                    }
                    if dr == 0 {
                        break; // same target row twice
                    }
                }
            }
        }
        out
    }

    /// Morphological closing (dilate then erode) with a disk structuring
    /// element; fills openings of diameter up to about 2*radius.
    pub fn close_disk(&self, radius: u32) -> Mask {
        if radius == 0 {
            return self.clone();
        }
        self.dilate_disk(radius).erode_disk(radius)
    }

    /// Keeps only the longest contiguous run of set pixels per row. Ties go
    /// to the leftmost run.
    pub fn keep_longest_run_per_row(&self) -> Mask {
        let mut out = Mask::new(self.width, self.height);
        for r in 0..self.height {
            if let Some((start, len)) = longest_run(self.row(r)) {
                out.row_mut(r)[start..start + len].fill(1);
            }
        }
        out
    }

    /// True when every row has at most one contiguous run of set pixels.
    pub fn rows_are_single_runs(&self) -> bool {
        (0..self.height).all(|r| run_count(self.row(r)) <= 1)
    }
}

/// Appends the half-open `[start, end)` spans of set pixels in `row`.
/// Skips uniform stretches eight bytes at a time.
fn scan_runs(row: &[u8], starts: &mut Vec<u32>, ends: &mut Vec<u32>) {
    const ONES: u64 = 0x0101_0101_0101_0101;
    let w = row.len();
    let mut c = 0;
    while c < w {
        while c + 8 <= w && u64::from_ne_bytes(row[c..c + 8].try_into().unwrap()) == 0 {
            c += 8;
        }
        while c < w && row[c] == 0 {
            c += 1;
        }
        if c >= w {
            break;
        }
        let start = c;
        while c + 8 <= w && u64::from_ne_bytes(row[c..c + 8].try_into().unwrap()) == ONES {
            c += 8;
        }
        while c < w && row[c] != 0 {
            c += 1;
        }
        starts.push(start as u32);
        ends.push(c as u32);
    }
}

fn find(parent: &mut [u32], mut x: u32) -> u32 {
    while parent[x as usize] != x {
        parent[x as usize] = parent[parent[x as usize] as usize];
        x = parent[x as usize];
    }
    x
}

fn union(parent: &mut [u32], a: u32, b: u32) {
    let ra = find(parent, a);
    let rb = find(parent, b);
    if ra != rb {
        parent[rb.max(ra) as usize] = rb.min(ra);
    }
}

/// Integer square root of a small non-negative value.
fn isqrt(v: i64) -> i64 {
    let mut s = (v as f64).sqrt() as i64;
    while (s + 1) * (s + 1) <= v {
        s += 1;
    }
    while s * s > v {
        s -= 1;
    }
    s
}

/// `dst[i] = OR of src[i-e ..= i+e]`, clipped at the row ends.
fn hdilate(src: &[u8], dst: &mut [u8], e: usize) {
    let w = src.len();
    dst.copy_from_slice(src);
    for s in 1..=e.min(w.saturating_sub(1)) {
        for (d, &v) in dst[s..].iter_mut().zip(&src[..w - s]) {
            *d |= v;
        }
        for (d, &v) in dst[..w - s].iter_mut().zip(&src[s..]) {
            *d |= v;
        }
    }
}

/// `dst[i] = AND of src[i-e ..= i+e]`; positions outside the row count as
/// set (they are simply skipped).
fn herode(src: &[u8], dst: &mut [u8], e: usize) {
    let w = src.len();
    dst.copy_from_slice(src);
    for s in 1..=e.min(w.saturating_sub(1)) {
        for (d, &v) in dst[s..].iter_mut().zip(&src[..w - s]) {
            *d &= v;
        }
        for (d, &v) in dst[..w - s].iter_mut().zip(&src[s..]) {
            *d &= v;
        }
    }
}

fn longest_run(row: &[u8]) -> Option<(usize, usize)> {
    let mut best: Option<(usize, usize)> = None;
    let mut i = 0;
    while i < row.len() {
        if row[i] != 0 {
            let start = i;
            while i < row.len() && row[i] != 0 {
                i += 1;
            }
            let len = i - start;
            if best.map_or(true, |(_, bl)| len > bl) {
                best = Some((start, len));
            }
        } else {
            i += 1;
        }
    }
    best
}

fn run_count(row: &[u8]) -> usize {
    let mut n = 0;
    let mut prev = 0u8;
    for &v in row {
        if v != 0 && prev == 0 {
            n += 1;
        }
        prev = v;
    }
    n
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rect(w: u32, h: u32, c0: u32, r0: u32, c1: u32, r1: u32) -> Mask {
        let mut m = Mask::new(w, h);
        for r in r0..r1 {
            for c in c0..c1 {
                m.set(c, r, true);
            }
        }
        m
    }

    #[test]
    fn anchor_component_drops_disjoint_blob() {
        // main corridor touching the bottom center plus a blob near the top
        let mut m = rect(90, 100, 30, 60, 60, 100);
        for r in 5..10 {
            for c in 5..10 {
                m.set(c, r, true);
            }
        }
        let kept = m.select_anchor_component();
        assert!(kept.get(45, 99));
        assert!(!kept.get(7, 7));
        let (_, n) = kept.label_components();
        assert_eq!(n, 1);
    }

    #[test]
    fn anchor_component_empty_and_identity() {
        let empty = Mask::new(50, 50);
        assert!(empty.select_anchor_component().is_empty());
        let m = rect(90, 100, 30, 60, 60, 100);
        assert_eq!(m.select_anchor_component(), m);
    }

    #[test]
    fn closing_fills_small_hole() {
        let mut m = rect(40, 40, 5, 5, 35, 35);
        for r in 18..21 {
            for c in 18..21 {
                m.set(c, r, false);
            }
        }
        let closed = m.close_disk(2);
        assert!(closed.get(19, 19));
        // the outer boundary is preserved
        assert_eq!(closed, rect(40, 40, 5, 5, 35, 35));
    }

    #[test]
    fn closing_radius_zero_is_identity() {
        let m = rect(40, 40, 5, 5, 35, 35);
        assert_eq!(m.close_disk(0), m);
    }

    #[test]
    fn closing_is_idempotent() {
        let mut m = rect(60, 60, 10, 10, 50, 50);
        m.set(30, 30, false);
        m.set(12, 40, false);
        for c in 20..24 {
            m.set(c, 25, false);
        }
        let once = m.close_disk(2);
        assert_eq!(once.close_disk(2), once);
    }

    #[test]
    fn diagonal_pixels_are_one_component() {
        let mut m = Mask::new(10, 10);
        m.set(3, 3, true);
        m.set(4, 4, true);
        let (_, n) = m.label_components();
        assert_eq!(n, 1);
    }

    #[test]
    fn longest_run_per_row() {
        let mut m = Mask::new(10, 1);
        for c in [0, 1, 4, 5, 6, 9] {
            m.set(c, 0, true);
        }
        let kept = m.keep_longest_run_per_row();
        assert_eq!(kept.row(0), &[0, 0, 0, 0, 1, 1, 1, 0, 0, 0]);
        assert!(kept.rows_are_single_runs());
    }

    /// Offset-list reference implementations of the disk morphology,
    /// matching the documented boundary semantics (dilate clips, erode
    /// treats outside as set).
    fn disk_offsets(radius: u32) -> Vec<(i64, i64)> {
        let r = radius as i64;
        let mut v = Vec::new();
        for dr in -r..=r {
            for dc in -r..=r {
                if dc * dc + dr * dr <= r * r {
                    v.push((dc, dr));
                }
            }
        }
        v
    }

    fn dilate_ref(m: &Mask, radius: u32) -> Mask {
        let (w, h) = (m.width as i64, m.height as i64);
        let mut out = Mask::new(m.width, m.height);
        for r in 0..h {
            for c in 0..w {
                if !m.get(c as u32, r as u32) {
                    continue;
                }
                for (dc, dr) in disk_offsets(radius) {
                    let (nc, nr) = (c + dc, r + dr);
                    if nc >= 0 && nr >= 0 && nc < w && nr < h {
                        out.set(nc as u32, nr as u32, true);
                    }
                }
            }
        }
        out
    }

    fn erode_ref(m: &Mask, radius: u32) -> Mask {
        let (w, h) = (m.width as i64, m.height as i64);
        let mut out = Mask::new(m.width, m.height);
        for r in 0..h {
            for c in 0..w {
                let ok = disk_offsets(radius).iter().all(|&(dc, dr)| {
                    let (nc, nr) = (c + dc, r + dr);
                    if nc < 0 || nr < 0 || nc >= w || nr >= h {
                        true
                    } else {
                        m.get(nc as u32, nr as u32)
                    }
                });
                if ok && m.get(c as u32, r as u32) {
                    out.set(c as u32, r as u32, true);
                }
            }
        }
        out
    }

    fn random_mask(w: u32, h: u32, density: u64, seed: &mut u64) -> Mask {
        let mut m = Mask::new(w, h);
        for r in 0..h {
            for c in 0..w {
                *seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                m.set(c, r, (*seed >> 33) % 100 < density);
            }
        }
        m
    }

    #[test]
    fn morphology_matches_offset_reference() {
        let mut seed = 7u64;
        for radius in [1u32, 2, 3] {
            for density in [5u64, 40, 80] {
                let m = random_mask(61, 37, density, &mut seed);
                assert_eq!(m.dilate_disk(radius), dilate_ref(&m, radius), "dilate r={radius}");
                assert_eq!(m.erode_disk(radius), erode_ref(&m, radius), "erode r={radius}");
            }
        }
    }

    #[test]
    fn anchor_component_matches_label_reference() {
        let mut seed = 99u64;
        for density in [20u64, 50, 75] {
            let m = random_mask(48, 40, density, &mut seed);
            let fast = m.select_anchor_component();
            // reference: flood-fill labels, pick the first labelled pixel in
            // the anchor region scanning row-major
            let (labels, _) = m.label_components();
            let row0 = (m.height as f64 * 0.95).floor() as u32;
            let (col0, col1) = (m.width / 3, 2 * m.width / 3);
            let mut keep = None;
            'scan: for r in row0..m.height {
                for c in col0..col1 {
                    let l = labels[r as usize * m.width as usize + c as usize];
                    if l != 0 {
                        keep = Some(l);
                        break 'scan;
                    }
                }
            }
            let mut expect = Mask::new(m.width, m.height);
            if let Some(l) = keep {
                for (i, &v) in labels.iter().enumerate() {
                    if v == l {
                        expect.set(i as u32 % m.width, i as u32 / m.width, true);
                    }
                }
            }
            assert_eq!(fast, expect, "density {density}");
        }
    }

    #[test]
    fn truncate_above_row_semantics() {
        let m = rect(10, 20, 0, 5, 10, 15);
        let t = m.truncate_above_row(8.5);
        assert!(!t.get(0, 8));
        assert!(t.get(0, 9));
        // integral cut row keeps that row
        let t2 = m.truncate_above_row(8.0);
        assert!(t2.get(0, 8));
        assert!(!t2.get(0, 7));
        // idempotent
        assert_eq!(t.truncate_above_row(8.5), t);
    }
}
