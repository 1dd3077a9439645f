//! Plain-text serialisation of graphs and configurations.
//!
//! A graph file lists the window, the edge-law parameters, the frame spins,
//! every edge with both feelings, and optionally a configuration:
//!
//! ```text
//! lrgraph 1
//! L 3
//! boundary torus
//! C 1
//! gamma 9
//! seed 0
//! symmetric 1
//! edges 18
//! 0 0 0 1 1 1
//! ...
//! spins 9
//! 0 0 +
//! ...
//! ```
//!
//! Edge lines are `x1 x2 y1 y2 j(x,y) j(y,x)`. Pinned windows declare
//! `boundary pinned W` followed by a `frame N` section of `x1 x2 s` lines.
//! Blank lines and lines starting with `#` are ignored.

use std::collections::HashMap;
use std::fmt::Write as _;

use crate::config::MAX_FRAME_WIDTH;
use crate::dynamics::Configuration;
use crate::error::{Error, Result};
use crate::graph::{EdgeParams, FeelingMap, Graph};
use crate::lattice::{Boundary, BoundaryMode, Frame, Site, Spin, Window};

/// Largest window side accepted by the graph reader.
pub const MAX_FILE_SIDE: usize = 1024;

/// Contents of a graph file.
#[derive(Clone, Debug, PartialEq)]
pub struct GraphFile {
    pub graph: Graph,
    pub feelings: FeelingMap,
    pub spins: Option<Configuration>,
}

pub fn write_graph(graph: &Graph, feelings: &FeelingMap, spins: Option<&Configuration>) -> String {
    let w = graph.window();
    let mut out = String::new();
    let _ = writeln!(out, "lrgraph 1");
    let _ = writeln!(out, "L {}", w.side());
    match w.boundary() {
        Boundary::Pinned(f) => {
            let _ = writeln!(out, "boundary pinned {}", f.width());
        }
        _ => {
            let _ = writeln!(out, "boundary {}", w.mode().name());
        }
    }
    let p = graph.params();
    let _ = writeln!(out, "C {}", p.c);
    let _ = writeln!(out, "gamma {}", p.gamma);
    let _ = writeln!(out, "seed {}", graph.seed());
    let _ = writeln!(out, "symmetric {}", feelings.is_symmetric() as u8);
    if let Boundary::Pinned(f) = w.boundary() {
        let _ = writeln!(out, "frame {}", f.spins().len());
        for (i, &s) in w.frame_indices().zip(f.spins()) {
            let site = w.site(i);
            let _ = writeln!(out, "{} {} {}", site.x1, site.x2, s.as_char());
        }
    }
    let _ = writeln!(out, "edges {}", graph.num_edges());
    for (a, b) in graph.edges() {
        let (sa, sb) = (w.site(a), w.site(b));
        let _ = writeln!(
            out,
            "{} {} {} {} {} {}",
            sa.x1,
            sa.x2,
            sb.x1,
            sb.x2,
            feelings.get(graph, a, b),
            feelings.get(graph, b, a)
        );
    }
    if let Some(c) = spins {
        let _ = writeln!(out, "spins {}", w.num_sites());
        for (i, &s) in c.spins().iter().enumerate() {
            let site = w.site(i);
            let _ = writeln!(out, "{} {} {}", site.x1, site.x2, s.as_char());
        }
    }
    out
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    last: usize,
}

impl<'a> Lines<'a> {
    fn new(text: &'a str) -> Self {
        Self {
            inner: text.lines().enumerate(),
            last: 0,
        }
    }

    fn next(&mut self) -> Option<(usize, Vec<&'a str>)> {
        for (i, line) in self.inner.by_ref() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            self.last = i + 1;
            return Some((i + 1, line.split_whitespace().collect()));
        }
        None
    }

    fn expect(&mut self, what: &str) -> Result<(usize, Vec<&'a str>)> {
        self.next().ok_or_else(|| {
            Error::parse(
                self.last + 1,
                format!("unexpected end of file, expected {what}"),
            )
        })
    }

    /// A `key value...` line with exactly `arity` values.
    fn keyed(&mut self, key: &str, arity: usize) -> Result<(usize, Vec<&'a str>)> {
        let (line, words) = self.expect(key)?;
        if words[0] != key {
            return Err(Error::parse(
                line,
                format!("expected `{key}`, found `{}`", words[0]),
            ));
        }
        if words.len() != arity + 1 {
            return Err(Error::parse(
                line,
                format!("`{key}` takes {arity} value(s)"),
            ));
        }
        Ok((line, words[1..].to_vec()))
    }
}

fn num<T: std::str::FromStr>(line: usize, word: &str, what: &str) -> Result<T> {
    word.parse()
        .map_err(|_| Error::parse(line, format!("bad {what} `{word}`")))
}

fn spin_of(line: usize, word: &str) -> Result<Spin> {
    match word {
        "+" | "1" | "+1" => Ok(Spin::Plus),
        "-" | "-1" => Ok(Spin::Minus),
        _ => Err(Error::parse(line, format!("bad spin `{word}`"))),
    }
}

fn site_of(line: usize, window: &Window, x1: &str, x2: &str) -> Result<usize> {
    let s = Site::new(num(line, x1, "coordinate")?, num(line, x2, "coordinate")?);
    window
        .index(s)
        .ok_or_else(|| Error::parse(line, format!("site {s} lies outside the window")))
}

fn reattach(e: Error, line: usize) -> Error {
    match e {
        Error::Parse { .. } => e,
        other => Error::parse(line, other.to_string()),
    }
}

/// Site-keyed spin section: `count` lines of `x1 x2 s`, each site exactly once.
fn spin_section(
    lines: &mut Lines<'_>,
    window: &Window,
    count: usize,
    of: impl Fn(usize) -> bool,
) -> Result<HashMap<usize, Spin>> {
    let mut out = HashMap::new();
    for _ in 0..count {
        let (line, w) = lines.expect("a spin line")?;
        if w.len() != 3 {
            return Err(Error::parse(line, "spin lines are `x1 x2 s`"));
        }
        let i = site_of(line, window, w[0], w[1])?;
        if !of(i) {
            return Err(Error::parse(
                line,
                format!("site {} does not belong to this section", window.site(i)),
            ));
        }
        if out.insert(i, spin_of(line, w[2])?).is_some() {
            return Err(Error::parse(
                line,
                format!("site {} listed twice", window.site(i)),
            ));
        }
    }
    Ok(out)
}

/// Reads a graph file, checking every structural invariant of the model.
pub fn parse_graph(text: &str) -> Result<GraphFile> {
    let mut lines = Lines::new(text);
    let (line, magic) = lines.expect("header")?;
    if magic != ["lrgraph", "1"] {
        return Err(Error::parse(line, "expected header `lrgraph 1`"));
    }
    let (line, v) = lines.keyed("L", 1)?;
    let side: usize = num(line, v[0], "side length")?;
    if !(2..=MAX_FILE_SIDE).contains(&side) {
        return Err(Error::parse(
            line,
            format!("side length must lie in 2..={MAX_FILE_SIDE}"),
        ));
    }
    let (bline, words) = lines.expect("boundary")?;
    if words[0] != "boundary" || words.len() < 2 {
        return Err(Error::parse(
            bline,
            "expected `boundary torus|free|pinned W`",
        ));
    }
    let mode = BoundaryMode::parse(words[1])
        .ok_or_else(|| Error::parse(bline, format!("unknown boundary `{}`", words[1])))?;
    let width = match (mode, words.len()) {
        (BoundaryMode::Pinned, 3) => {
            let w: usize = num(bline, words[2], "frame width")?;
            if w == 0 || w > side.min(MAX_FRAME_WIDTH) {
                return Err(Error::parse(
                    bline,
                    format!("frame width must lie in 1..={}", side.min(MAX_FRAME_WIDTH)),
                ));
            }
            w
        }
        (BoundaryMode::Pinned, _) => {
            return Err(Error::parse(bline, "pinned boundaries need a frame width"))
        }
        (_, 2) => 0,
        _ => return Err(Error::parse(bline, "only pinned boundaries take a width")),
    };
    let (line, v) = lines.keyed("C", 1)?;
    let c: f64 = num(line, v[0], "C")?;
    let (gline, v) = lines.keyed("gamma", 1)?;
    let gamma: f64 = num(gline, v[0], "gamma")?;
    let params = EdgeParams::new(c, gamma).map_err(|e| reattach(e, gline))?;
    let (line, v) = lines.keyed("seed", 1)?;
    let seed: u64 = num(line, v[0], "seed")?;
    let (line, v) = lines.keyed("symmetric", 1)?;
    let symmetric = match v[0] {
        "0" => false,
        "1" => true,
        other => {
            return Err(Error::parse(
                line,
                format!("symmetric must be 0 or 1, got `{other}`"),
            ))
        }
    };

    let window = match mode {
        BoundaryMode::Torus => Window::torus(side),
        BoundaryMode::Free => Window::free(side),
        BoundaryMode::Pinned => {
            let shape = Window::pinned(side, Frame::uniform(side, width, Spin::Plus)?)?;
            let (line, v) = lines.keyed("frame", 1)?;
            let count: usize = num(line, v[0], "frame size")?;
            let expected = shape.num_sites() - shape.num_interior();
            if count != expected {
                return Err(Error::parse(
                    line,
                    format!("frame needs {expected} sites, got {count}"),
                ));
            }
            let spins = spin_section(&mut lines, &shape, count, |i| !shape.is_interior_index(i))?;
            let frame = Frame::new(
                side,
                width,
                shape.frame_indices().map(|i| spins[&i]).collect(),
            )?;
            Window::pinned(side, frame)
        }
    }
    .map_err(|e| reattach(e, bline))?;

    let (eline, v) = lines.keyed("edges", 1)?;
    let count: usize = num(eline, v[0], "edge count")?;
    let mut edges = Vec::new();
    let mut feel: HashMap<(usize, usize), i8> = HashMap::new();
    for _ in 0..count {
        let (line, w) = lines.expect("an edge line")?;
        if w.len() != 6 {
            return Err(Error::parse(line, "edge lines are `x1 x2 y1 y2 j_xy j_yx`"));
        }
        let a = site_of(line, &window, w[0], w[1])?;
        let b = site_of(line, &window, w[2], w[3])?;
        let jab: i8 = num(line, w[4], "feeling")?;
        let jba: i8 = num(line, w[5], "feeling")?;
        if jab.abs() != 1 || jba.abs() != 1 {
            return Err(Error::parse(line, "feelings must be -1 or 1"));
        }
        if a == b {
            return Err(Error::parse(line, "self-loop"));
        }
        if feel.insert((a, b), jab).is_some() || feel.insert((b, a), jba).is_some() {
            return Err(Error::parse(line, "edge listed twice"));
        }
        edges.push((a, b));
    }
    let graph = Graph::from_edges(window, params, seed, edges).map_err(|e| reattach(e, eline))?;
    let feelings = FeelingMap::from_fn(&graph, symmetric, |x, y| feel[&(x, y)])
        .map_err(|e| reattach(e, eline))?;

    let spins = match lines.next() {
        None => None,
        Some((line, w)) => {
            if w.len() != 2 || w[0] != "spins" {
                return Err(Error::parse(line, "expected `spins N` or end of file"));
            }
            let w_ = graph.window();
            let count: usize = num(line, w[1], "spin count")?;
            if count != w_.num_sites() {
                return Err(Error::parse(
                    line,
                    format!("spins section needs {} sites", w_.num_sites()),
                ));
            }
            let map = spin_section(&mut lines, w_, count, |_| true)?;
            let config = Configuration::from_spins(w_, (0..count).map(|i| map[&i]).collect())
                .map_err(|e| reattach(e, line))?;
            if let Some((line, _)) = lines.next() {
                return Err(Error::parse(
                    line,
                    "trailing content after the spins section",
                ));
            }
            Some(config)
        }
    };
    Ok(GraphFile {
        graph,
        feelings,
        spins,
    })
}

/// Interior configuration as rows of `+` and `-`, one row per `x1`.
pub fn write_state(window: &Window, config: &Configuration) -> String {
    let l = window.side();
    let mut out = String::with_capacity(l * (l + 1));
    for x1 in 0..l as i32 {
        for x2 in 0..l as i32 {
            let i = window.index(Site::new(x1, x2)).expect("interior site");
            out.push(config.get(i).as_char());
        }
        out.push('\n');
    }
    out
}
