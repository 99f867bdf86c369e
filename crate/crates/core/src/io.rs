//! Plain-text grid dumps and CSV tables.
//!
//! A dump starts with `nx ny h`, then a legend line naming the domain, the
//! observation rectangle and the row/column layout, then `ny` rows of `nx`
//! values in `{:.16e}` notation (row `j` holds `x2 = y0 + j h`). Values round-trip
//! exactly.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::{Field, Grid2D};

pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn legend(grid: &Grid2D) -> String {
    let (d, e) = (&grid.domain, &grid.e_rect);
    format!(
        "# D=[{},{}]x[{},{}] E=[{},{}]x[{},{}] rows=x2 ascending cols=x1 ascending",
        d.x0, d.x1, d.y0, d.y1, e.x0, e.x1, e.y0, e.y1
    )
}

pub fn dump_string(grid: &Grid2D, v: &[f64]) -> String {
    let mut s = format!("{} {} {}\n{}\n", grid.nx, grid.ny, fmt_f64(grid.h), legend(grid));
    for j in 0..grid.ny {
        let row: Vec<String> = (0..grid.nx).map(|i| fmt_f64(v[grid.index(i, j)])).collect();
        writeln!(s, "{}", row.join(" ")).expect("string write");
    }
    s
}

pub fn write_dump(path: &Path, grid: &Grid2D, v: &[f64]) -> Result<()> {
    std::fs::write(path, dump_string(grid, v))?;
    Ok(())
}

/// Parses a dump and checks its header against `grid`.
pub fn parse_dump(text: &str, grid: &Grid2D) -> Result<Field> {
    let bad = |line: usize, msg: String| Error::Config { line, msg };
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| bad(1, "empty grid dump".into()))?;
    let parts: Vec<&str> = header.split_whitespace().collect();
    if parts.len() != 3 {
        return Err(bad(1, format!("expected `nx ny h`, got `{header}`")));
    }
    let nx: usize = parts[0].parse().map_err(|_| bad(1, format!("bad nx `{}`", parts[0])))?;
    let ny: usize = parts[1].parse().map_err(|_| bad(1, format!("bad ny `{}`", parts[1])))?;
    let h: f64 = parts[2].parse().map_err(|_| bad(1, format!("bad h `{}`", parts[2])))?;
    if nx != grid.nx || ny != grid.ny || (h - grid.h).abs() > 1e-12 * grid.h {
        return Err(bad(1, format!("dump is {nx}x{ny} (h={h}), grid is {}x{} (h={})", grid.nx, grid.ny, grid.h)));
    }
    let mut values = vec![0.0; grid.len()];
    let mut j = 0;
    for (ln, line) in lines {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if j == ny {
            return Err(bad(ln + 1, "more rows than ny".into()));
        }
        let row: Vec<&str> = line.split_whitespace().collect();
        if row.len() != nx {
            return Err(bad(ln + 1, format!("expected {nx} values, got {}", row.len())));
        }
        for (i, tok) in row.iter().enumerate() {
            let v: f64 = tok.parse().map_err(|_| bad(ln + 1, format!("bad value `{tok}`")))?;
            if !v.is_finite() {
                return Err(bad(ln + 1, format!("non-finite value `{tok}`")));
            }
            values[grid.index(i, j)] = v;
        }
        j += 1;
    }
    if j != ny {
        return Err(bad(text.lines().count(), format!("expected {ny} rows, got {j}")));
    }
    Field::from_vec(values)
}

pub fn read_dump(path: &Path, grid: &Grid2D) -> Result<Field> {
    let text = std::fs::read_to_string(path)?;
    parse_dump(&text, grid).map_err(|e| match e {
        Error::Config { line, msg } => Error::Config { line, msg: format!("{}: {msg}", path.display()) },
        other => other,
    })
}

/// A CSV table with a fixed header.
#[derive(Clone, Debug, Default)]
pub struct Csv {
    text: String,
    columns: usize,
}

impl Csv {
    pub fn new(header: &[&str]) -> Self {
        Self { text: format!("{}\n", header.join(",")), columns: header.len() }
    }

    pub fn row(&mut self, cells: &[String]) {
        assert_eq!(cells.len(), self.columns, "CSV row width");
        self.text.push_str(&cells.join(","));
        self.text.push('\n');
    }

    pub fn as_str(&self) -> &str {
        &self.text
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, &self.text)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Rect;
    use proptest::prelude::*;

    fn grid() -> Grid2D {
        Grid2D::new(5, 4, Rect::new(0.0, 1.2, 0.0, 1.0), Rect::new(0.3, 0.9, 0.3, 0.7)).unwrap()
    }

    #[test]
    fn dump_layout() {
        let g = grid();
        let v = Field::from_fn(&g, |x, y| x + 10.0 * y);
        let s = dump_string(&g, &v);
        let lines: Vec<&str> = s.lines().collect();
        assert_eq!(lines.len(), 2 + 4);
        assert!(lines[0].starts_with("5 4 "));
        assert!(lines[1].starts_with('#'));
        assert_eq!(lines[2].split(' ').count(), 5);
        let (x, y) = g.node(0, 1);
        assert!(lines[3].starts_with(&fmt_f64(x + 10.0 * y)));
    }

    #[test]
    fn dump_rejects_mismatches() {
        let g = grid();
        let s = dump_string(&g, &Field::zeros(g.len()));
        let other = Grid2D::new(5, 5, Rect::unit(), Rect::new(0.25, 0.75, 0.25, 0.75)).unwrap();
        assert!(parse_dump(&s, &other).is_err());
        let truncated: String = s.lines().take(4).map(|l| format!("{l}\n")).collect();
        match parse_dump(&truncated, &g) {
            Err(Error::Config { msg, .. }) => assert!(msg.contains("rows")),
            other => panic!("{other:?}"),
        }
        let corrupted = s.replacen("0.0000000000000000e0", "abc", 1);
        match parse_dump(&corrupted, &g) {
            Err(Error::Config { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }

    proptest! {
        #[test]
        fn dump_round_trip_is_exact(v in proptest::collection::vec(-1e6f64..1e6, 20)) {
            let g = grid();
            let s = dump_string(&g, &v);
            let back = parse_dump(&s, &g).unwrap();
            prop_assert_eq!(&back[..], &v[..]);
            prop_assert_eq!(dump_string(&g, &back), s);
        }
    }
}
