//! Border following on binary rasters (Suzuki and Abe's method) and
//! outer-contour filling.

use crate::raster::BinaryMask;

/// A traced border; `parent` indexes into the list returned by
/// [`find_borders`], `None` meaning the image frame.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Border {
    pub outer: bool,
    pub parent: Option<usize>,
    /// Border pixels `(x, y)` in tracing order, starting at the raster-first pixel.
    pub points: Vec<(usize, usize)>,
}

// clockwise neighbour order starting east, in (dy, dx) with y pointing down
const DIRS: [(i64, i64); 8] = [(0, 1), (1, 1), (1, 0), (1, -1), (0, -1), (-1, -1), (-1, 0), (-1, 1)];

fn dir_index(dy: i64, dx: i64) -> usize {
    DIRS.iter().position(|&d| d == (dy, dx)).expect("neighbour offset")
}

/// Trace every border of the 8-connected foreground components.
pub fn find_borders(mask: &BinaryMask) -> Vec<Border> {
    let (w, h) = (mask.width() as i64 + 2, mask.height() as i64 + 2);
    // padded label image; 0 background, 1 unvisited foreground, +-k border k
    let mut f = vec![0i64; (w * h) as usize];
    for y in 0..mask.height() {
        for x in 0..mask.width() {
            if mask.get(x, y) {
                f[((y as i64 + 1) * w + x as i64 + 1) as usize] = 1;
            }
        }
    }
    let at = |f: &Vec<i64>, y: i64, x: i64| f[(y * w + x) as usize];
    // border numbers start at 2; number 1 is the frame (a hole border)
    let mut kinds: Vec<(bool, Option<usize>)> = vec![(false, None)];
    let mut borders: Vec<Border> = Vec::new();
    let mut nbd: i64 = 1;

    for i in 1..h - 1 {
        let mut lnbd: i64 = 1;
        for j in 1..w - 1 {
            let fij = at(&f, i, j);
            if fij == 0 {
                continue;
            }
            let start = if fij == 1 && at(&f, i, j - 1) == 0 {
                Some((true, (i, j - 1)))
            } else if fij >= 1 && at(&f, i, j + 1) == 0 {
                if fij > 1 {
                    lnbd = fij;
                }
                Some((false, (i, j + 1)))
            } else {
                None
            };
            if let Some((outer, (i2, j2))) = start {
                nbd += 1;
                let (lnbd_outer, lnbd_parent) = kinds[(lnbd - 1) as usize];
                let lnbd_idx = if lnbd == 1 { None } else { Some((lnbd - 2) as usize) };
                let parent = if outer == lnbd_outer { lnbd_parent } else { lnbd_idx };
                kinds.push((outer, parent));
                let points = follow(&mut f, w, (i, j), (i2, j2), nbd);
                borders.push(Border {
                    outer,
                    parent,
                    points: points.into_iter().map(|(y, x)| ((x - 1) as usize, (y - 1) as usize)).collect(),
                });
            }
            let fij = at(&f, i, j);
            if fij != 1 {
                lnbd = fij.abs();
            }
        }
    }
    borders
}

fn follow(f: &mut [i64], w: i64, p: (i64, i64), from: (i64, i64), nbd: i64) -> Vec<(i64, i64)> {
    let idx = |y: i64, x: i64| (y * w + x) as usize;
    let (i, j) = p;
    // 3.1: clockwise search around p starting at `from`
    let d0 = dir_index(from.0 - i, from.1 - j);
    let first = (0..8).map(|k| (d0 + k) % 8).find(|&d| f[idx(i + DIRS[d].0, j + DIRS[d].1)] != 0);
    let Some(d1) = first else {
        f[idx(i, j)] = -nbd;
        return vec![p];
    };
    let p1 = (i + DIRS[d1].0, j + DIRS[d1].1);
    let mut p2 = p1;
    let mut p3 = p;
    let mut points = vec![p];
    loop {
        // 3.3: counter-clockwise around p3 starting after p2
        let dp2 = dir_index(p2.0 - p3.0, p2.1 - p3.1);
        let mut east_zero_examined = false;
        let mut p4 = p3;
        for k in 1..=8 {
            let d = (dp2 + 8 - k) % 8;
            let q = (p3.0 + DIRS[d].0, p3.1 + DIRS[d].1);
            if f[idx(q.0, q.1)] != 0 {
                p4 = q;
                break;
            }
            if d == 0 {
                east_zero_examined = true;
            }
        }
        // 3.4
        let v = &mut f[idx(p3.0, p3.1)];
        if east_zero_examined {
            *v = -nbd;
        } else if *v == 1 {
            *v = nbd;
        }
        // 3.5
        if p4 == p && p3 == p1 {
            break;
        }
        p2 = p3;
        p3 = p4;
        if p3 != p {
            points.push(p3);
        }
    }
    points
}

/// Pixels enclosed by a closed border, border included: the complement of
/// what a 4-connected flood from outside reaches without crossing it.
pub fn fill_border(points: &[(usize, usize)], width: usize, height: usize) -> BinaryMask {
    let (w, h) = (width + 2, height + 2);
    let mut wall = vec![false; w * h];
    for &(x, y) in points {
        wall[(y + 1) * w + x + 1] = true;
    }
    let mut outside = vec![false; w * h];
    let mut stack = vec![0usize];
    outside[0] = true;
    while let Some(k) = stack.pop() {
        let (x, y) = (k % w, k / w);
        let mut push = |nk: usize| {
            if !outside[nk] && !wall[nk] {
                outside[nk] = true;
                stack.push(nk);
            }
        };
        if x > 0 {
            push(k - 1);
        }
        if x + 1 < w {
            push(k + 1);
        }
        if y > 0 {
            push(k - w);
        }
        if y + 1 < h {
            push(k + w);
        }
    }
    BinaryMask::from_fn(width, height, |x, y| !outside[(y + 1) * w + x + 1])
}

/// The filled region of the largest top-level outer contour, or `None` when
/// the raster has no foreground. Ties keep the contour met first in raster order.
pub fn extract_object_mask(binary: &BinaryMask) -> Option<BinaryMask> {
    let mut best: Option<(usize, BinaryMask)> = None;
    for b in find_borders(binary).iter().filter(|b| b.outer && b.parent.is_none()) {
        let filled = fill_border(&b.points, binary.width(), binary.height());
        let area = filled.count();
        if best.as_ref().is_none_or(|(a, _)| area > *a) {
            best = Some((area, filled));
        }
    }
    best.map(|(_, m)| m)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn from_rows(rows: &[&str]) -> BinaryMask {
        BinaryMask::from_fn(rows[0].len(), rows.len(), |x, y| rows[y].as_bytes()[x] == b'#')
    }

    #[test]
    fn single_pixel_and_hierarchy() {
        let m = from_rows(&[
            "#######", //
            "#.....#",
            "#.###.#",
            "#.#.#.#",
            "#.###.#",
            "#.....#",
            "#######",
        ]);
        let b = find_borders(&m);
        // outer ring, its hole, inner ring, its hole
        assert_eq!(b.len(), 4);
        assert!(b[0].outer && b[0].parent.is_none());
        assert!(!b[1].outer && b[1].parent == Some(0));
        assert!(b[2].outer && b[2].parent == Some(1));
        assert!(!b[3].outer && b[3].parent == Some(2));
        assert_eq!(b[0].points.len(), 24);

        let dot = from_rows(&["...", ".#.", "..."]);
        let b = find_borders(&dot);
        assert_eq!(b.len(), 1);
        assert_eq!(b[0].points, vec![(1, 1)]);
    }

    #[test]
    fn diagonal_chain_is_one_component() {
        let m = from_rows(&["#...", ".#..", "..#.", "...#"]);
        let b = find_borders(&m);
        assert_eq!(b.len(), 1);
        assert_eq!(fill_border(&b[0].points, 4, 4), m);
    }

    #[test]
    fn empty_raster_has_no_object() {
        assert!(extract_object_mask(&BinaryMask::new(5, 4)).is_none());
    }
}
