use std::collections::HashMap;

type Cell = (i64, i64, i64);

/// Exact radius-bounded nearest-neighbour lookup over labeled points, backed by
/// a uniform grid whose cell size equals the search radius.
pub struct PointIndex {
    cell: f64,
    radius_sq: f64,
    points: Vec<[f64; 3]>,
    labels: Vec<usize>,
    grid: HashMap<Cell, Vec<usize>>,
}

impl PointIndex {
    pub fn new(radius: f64, labeled: impl IntoIterator<Item = ([f64; 3], usize)>) -> Self {
        assert!(radius > 0.0, "search radius must be positive");
        let mut idx =
            Self { cell: radius, radius_sq: radius * radius, points: Vec::new(), labels: Vec::new(), grid: HashMap::new() };
        for (p, label) in labeled {
            let i = idx.points.len();
            idx.points.push(p);
            idx.labels.push(label);
            idx.grid.entry(idx.cell_of(&p)).or_default().push(i);
        }
        idx
    }

    fn cell_of(&self, p: &[f64; 3]) -> Cell {
        ((p[0] / self.cell).floor() as i64, (p[1] / self.cell).floor() as i64, (p[2] / self.cell).floor() as i64)
    }

    /// Label of the nearest point within the radius. Equal distances resolve to
    /// the point inserted first.
    pub fn nearest_label(&self, q: &[f64; 3]) -> Option<usize> {
        if !q.iter().all(|v| v.is_finite()) {
            return None;
        }
        let (cx, cy, cz) = self.cell_of(q);
        let mut best: Option<(f64, usize)> = None;
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    let Some(bucket) = self.grid.get(&(cx + dx, cy + dy, cz + dz)) else { continue };
                    for &i in bucket {
                        let p = &self.points[i];
                        let d = (p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2) + (p[2] - q[2]).powi(2);
                        if d > self.radius_sq {
                            continue;
                        }
                        best = match best {
                            Some((bd, bi)) if bd < d || (bd == d && bi < i) => Some((bd, bi)),
                            _ => Some((d, i)),
                        };
                    }
                }
            }
        }
        best.map(|(_, i)| self.labels[i])
    }
}
