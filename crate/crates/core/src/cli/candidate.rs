//! Candidate `(ubar, mu_dot)` read from CSV.
//!
//! Columns are `t`, `u1 .. um` and `mu_dot1 .. mu_dotq` in any order. Rows
//! are sorted by `t`; a time listed twice marks a jump, the first row being
//! the left limit and the second the right limit. Between rows the
//! candidate is interpolated linearly.

use std::io::Read;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::problem::expr::Side;
use crate::problem::{Grid, TimeSamples};

#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    /// Row times, non-decreasing, each at most twice.
    pub t: Vec<f64>,
    /// `(rows, m)`.
    pub u: Array2<f64>,
    /// `(rows, q)`.
    pub mu_dot: Array2<f64>,
}

impl Candidate {
    pub fn read<R: Read>(input: R, m: usize, q: usize) -> Result<Candidate> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
        let header = rdr.headers()?.clone();
        let col = |name: &str| {
            header
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| Error::Candidate(format!("missing column `{name}`")))
        };
        let t_col = col("t")?;
        let u_cols = (1..=m).map(|i| col(&format!("u{i}"))).collect::<Result<Vec<_>>>()?;
        let mu_cols = (1..=q).map(|j| col(&format!("mu_dot{j}"))).collect::<Result<Vec<_>>>()?;
        let mut t = Vec::new();
        let mut u = Vec::new();
        let mut mu = Vec::new();
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let num = |c: usize| -> Result<f64> {
                let s = rec.get(c).unwrap_or("");
                s.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Error::Candidate(format!("row {}: `{s}` is not a finite number", line + 2)))
            };
            t.push(num(t_col)?);
            for &c in &u_cols {
                u.push(num(c)?);
            }
            for &c in &mu_cols {
                mu.push(num(c)?);
            }
        }
        let rows = t.len();
        if rows < 2 {
            return Err(Error::Candidate(format!("need at least two rows, got {rows}")));
        }
        for (k, w) in t.windows(2).enumerate() {
            if w[1] < w[0] {
                return Err(Error::Candidate(format!("times decrease at row {}", k + 3)));
            }
            if k > 0 && t[k - 1] == w[0] && w[0] == w[1] {
                return Err(Error::Candidate(format!("time {} listed more than twice", w[0])));
            }
        }
        let shape = |cols: usize, v: Vec<f64>| {
            Array2::from_shape_vec((rows, cols), v).map_err(|e| Error::Candidate(e.to_string()))
        };
        Ok(Candidate { u: shape(m, u)?, mu_dot: shape(q, mu)?, t })
    }

    /// Interior times where the candidate jumps.
    pub fn jump_times(&self) -> Vec<f64> {
        self.t.windows(2).filter(|w| w[0] == w[1]).map(|w| w[0]).collect()
    }

    /// Samples on `grid`, which must span the same interval.
    pub fn sample(&self, grid: &Grid) -> Result<(TimeSamples, TimeSamples)> {
        let (t0, t1) = (self.t[0], self.t[self.t.len() - 1]);
        let horizon = grid.horizon();
        let slack = 1e-9 * horizon.max(1.0);
        if (t0 - grid.t[0]).abs() > slack || (t1 - horizon).abs() > slack {
            return Err(Error::Candidate(format!("rows span [{t0}, {t1}] but the horizon is [0, {horizon}]")));
        }
        let interp = |data: &Array2<f64>, t: f64, side: Side| -> Vec<f64> {
            // the segment [r, r + 1] used for the requested one-sided limit
            let r = match side {
                Side::Left => self.t.partition_point(|&s| s < t).max(1) - 1,
                Side::Right => self.t.partition_point(|&s| s <= t).clamp(1, self.t.len() - 1) - 1,
            };
            let (a, b) = (self.t[r], self.t[r + 1]);
            let th = if b > a { ((t - a) / (b - a)).clamp(0.0, 1.0) } else { 1.0 };
            data.row(r).iter().zip(data.row(r + 1).iter()).map(|(x, y)| (1.0 - th) * x + th * y).collect()
        };
        let u = TimeSamples::from_fn(grid, self.u.ncols(), |t, side| interp(&self.u, t, side));
        let mu = TimeSamples::from_fn(grid, self.mu_dot.ncols(), |t, side| interp(&self.mu_dot, t, side));
        Ok((u, mu))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::example::{candidate_csv, example_candidate, example_spec, JUNCTIONS};

    #[test]
    fn reads_jumps_as_one_sided_limits() {
        let text = "t,u1,mu_dot1\n0,1,0\n1,1,0\n1,3,2\n2,5,2\n";
        let c = Candidate::read(text.as_bytes(), 1, 1).unwrap();
        assert_eq!(c.jump_times(), vec![1.0]);
        let spec = {
            let mut s = example_spec();
            s.horizon = 2.0;
            s
        };
        let grid = Grid::with_breakpoints(&spec, 4, 4, &c.jump_times()).unwrap();
        let (u, mu) = c.sample(&grid).unwrap();
        let k = grid.node_of(1.0).unwrap();
        assert_eq!(u.at(k, 0, Side::Left), 1.0);
        assert_eq!(u.at(k, 0, Side::Right), 3.0);
        assert_eq!(mu.at(k, 0, Side::Right), 2.0);
        assert_eq!(u.at(grid.node_of(1.5).unwrap(), 0, Side::Left), 4.0);
        assert_eq!(u.at(grid.t.len() - 1, 0, Side::Left), 5.0);
    }

    #[test]
    fn example_csv_roundtrip_on_the_same_grid() {
        let disc = crate::example::example_discretization(9, 60).unwrap();
        let text = candidate_csv(&disc.grid);
        let c = Candidate::read(text.as_bytes(), 1, 1).unwrap();
        assert_eq!(c.jump_times().len(), JUNCTIONS.len());
        for (a, b) in c.jump_times().iter().zip(JUNCTIONS) {
            assert!((a - b).abs() < 1e-15);
        }
        let (u, mu) = c.sample(&disc.grid).unwrap();
        let (u0, mu0) = example_candidate(&disc.grid);
        let err = (u.left() - u0.left()).iter().chain((u.right() - u0.right()).iter()).fold(0.0f64, |a, v| a.max(v.abs()));
        assert!(err < 1e-13, "{err}");
        assert!((mu.left() - mu0.left()).iter().all(|v| v.abs() < 1e-13));
    }

    #[test]
    fn rejects_malformed_input() {
        let bad = [
            "t,u1\n0,1\n1,1\n",
            "t,u1,mu_dot1\n0,1,0\n",
            "t,u1,mu_dot1\n0,1,0\n2,1,0\n1,1,0\n",
            "t,u1,mu_dot1\n0,1,0\n1,1,0\n1,1,0\n1,1,0\n",
            "t,u1,mu_dot1\n0,x,0\n1,1,0\n",
            "t,u1,mu_dot1\n0,nan,0\n1,1,0\n",
        ];
        for text in bad {
            assert!(matches!(Candidate::read(text.as_bytes(), 1, 1), Err(Error::Candidate(_))), "{text}");
        }
        let c = Candidate::read("t,u1,mu_dot1\n0,1,0\n1,1,0\n".as_bytes(), 1, 1).unwrap();
        let grid = Grid::uniform(&example_spec(), 4, 6).unwrap();
        assert!(c.sample(&grid).is_err());
    }
}
