//! Sequential directional 3D curve thinning.
//!
//! Border voxels are peeled one direction at a time (±x, ±y, ±z); a voxel is
//! removed only if it is a simple point (26-connectivity for the object,
//! 6-connectivity for the background) and not a curve endpoint. Removal is
//! sequential in index order, so topology is preserved exactly.

/// Index into a 3×3×3 neighborhood, x fastest.
#[inline]
fn nb(dx: i32, dy: i32, dz: i32) -> usize {
    ((dx + 1) + 3 * (dy + 1) + 9 * (dz + 1)) as usize
}

fn offset(n: usize) -> (i32, i32, i32) {
    ((n % 3) as i32 - 1, ((n / 3) % 3) as i32 - 1, (n / 9) as i32 - 1)
}

/// Simple-point test on a 3×3×3 occupancy cube (center = index 13).
pub fn is_simple(cube: &[bool; 27]) -> bool {
    // object: exactly one 26-component in N26 \ {p}
    let mut seen = [false; 27];
    let mut components = 0;
    for start in 0..27 {
        if start == 13 || !cube[start] || seen[start] {
            continue;
        }
        components += 1;
        if components > 1 {
            return false;
        }
        let mut stack = vec![start];
        seen[start] = true;
        while let Some(c) = stack.pop() {
            let (x, y, z) = offset(c);
            for n in 0..27 {
                if n == 13 || !cube[n] || seen[n] {
                    continue;
                }
                let (a, b, d) = offset(n);
                if (a - x).abs() <= 1 && (b - y).abs() <= 1 && (d - z).abs() <= 1 {
                    seen[n] = true;
                    stack.push(n);
                }
            }
        }
    }
    if components != 1 {
        return false;
    }

    // background: exactly one 6-component in N18 \ {p} that touches a face
    // neighbor of p
    let in18 = |n: usize| {
        let (x, y, z) = offset(n);
        n != 13 && x.abs() + y.abs() + z.abs() <= 2
    };
    let faces = [
        nb(-1, 0, 0),
        nb(1, 0, 0),
        nb(0, -1, 0),
        nb(0, 1, 0),
        nb(0, 0, -1),
        nb(0, 0, 1),
    ];
    let mut seen = [false; 27];
    let mut components = 0;
    for &start in &faces {
        if cube[start] || seen[start] {
            continue;
        }
        components += 1;
        if components > 1 {
            return false;
        }
        let mut stack = vec![start];
        seen[start] = true;
        while let Some(c) = stack.pop() {
            let (x, y, z) = offset(c);
            for (dx, dy, dz) in [
                (-1, 0, 0),
                (1, 0, 0),
                (0, -1, 0),
                (0, 1, 0),
                (0, 0, -1),
                (0, 0, 1),
            ] {
                let (a, b, d) = (x + dx, y + dy, z + dz);
                if a.abs() > 1 || b.abs() > 1 || d.abs() > 1 {
                    continue;
                }
                let n = nb(a, b, d);
                if in18(n) && !cube[n] && !seen[n] {
                    seen[n] = true;
                    stack.push(n);
                }
            }
        }
    }
    components == 1
}

/// Thins the voxel set (given as a dense mask of `dims`) to a curve
/// skeleton, in place. Voxels outside the grid count as background.
pub fn thin_to_curve(mask: &mut [bool], dims: [usize; 3]) {
    let [nx, ny, nz] = dims;
    assert_eq!(mask.len(), nx * ny * nz);
    let idx = |i: i64, j: i64, k: i64| -> Option<usize> {
        if i < 0 || j < 0 || k < 0 || i >= nx as i64 || j >= ny as i64 || k >= nz as i64 {
            None
        } else {
            Some(i as usize + nx * (j as usize + ny * k as usize))
        }
    };
    let cube_at = |mask: &[bool], v: usize| -> [bool; 27] {
        let (i, j, k) = (
            (v % nx) as i64,
            ((v / nx) % ny) as i64,
            (v / (nx * ny)) as i64,
        );
        let mut cube = [false; 27];
        for (n, c) in cube.iter_mut().enumerate() {
            let (dx, dy, dz) = offset(n);
            *c = idx(i + dx as i64, j + dy as i64, k + dz as i64).is_some_and(|u| mask[u]);
        }
        cube
    };
    let directions = [
        nb(0, 0, 1),
        nb(0, 0, -1),
        nb(0, 1, 0),
        nb(0, -1, 0),
        nb(1, 0, 0),
        nb(-1, 0, 0),
    ];
    loop {
        let mut changed = false;
        for &dir in &directions {
            let candidates: Vec<usize> = (0..mask.len())
                .filter(|&v| mask[v] && !cube_at(mask, v)[dir])
                .collect();
            for v in candidates {
                let cube = cube_at(mask, v);
                let neighbors = cube.iter().enumerate().filter(|&(n, &c)| n != 13 && c).count();
                if neighbors <= 1 {
                    continue; // curve endpoint or isolated voxel
                }
                if is_simple(&cube) {
                    mask[v] = false;
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simple_point_cases() {
        let mut cube = [false; 27];
        cube[13] = true;
        // isolated point: removing it deletes a component
        assert!(!is_simple(&cube));
        cube[nb(1, 0, 0)] = true;
        // tip of a segment
        assert!(is_simple(&cube));
        cube[nb(-1, 0, 0)] = true;
        // middle of a line: removal disconnects
        assert!(!is_simple(&cube));
        // full cube: interior point, removal makes a cavity
        let full = [true; 27];
        assert!(!is_simple(&full));
    }

    #[test]
    fn box_thins_to_a_line() {
        let dims = [20, 5, 3];
        let mut mask = vec![false; 300];
        for k in 0..3 {
            for j in 1..4 {
                for i in 2..18 {
                    mask[i + 20 * (j + 5 * k)] = true;
                }
            }
        }
        thin_to_curve(&mut mask, dims);
        let kept: Vec<usize> = (0..300).filter(|&v| mask[v]).collect();
        // one voxel per column along the box
        assert!(kept.len() >= 14 && kept.len() <= 18, "{}", kept.len());
        let mut xs: Vec<usize> = kept.iter().map(|v| v % 20).collect();
        xs.dedup();
        assert!(xs.len() >= 14);
    }
}
