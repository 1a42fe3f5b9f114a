//! The box-program representation, its text and JSON serializations, and
//! its execution into 2D element coordinates.
//!
//! A program is one camera statement plus one block per modeled plane. Each
//! plane block fixes the plane's 3D chart (position, normal, in-plane axes,
//! visible bounds) and a nested-loop lattice whose `Draw` coordinates are
//! expressed in the plane's rectified canvas pixels. Inner-view programs
//! have four plane blocks, outer-view programs two.
//!
//! Text form, one statement per line, semicolon-terminated:
//!
//! ```text
//! SetCamera(pos=(0, 0, 0), point_to=(0, 0, 1));
//! SetPlane(pos=(0, 1, 0), normal=(0, -1, 0), axis_s=(0, 0, 1),
//!          axis_t=(1, 0, 0), bounds=(2.9, 11.6, -2, 2), label=floor);
//! For (i in range(0, 8)) { For (j in range(0, 4)) {
//!     Draw(x=22.5*i + 0*j + 3.1, y=0*i + 49*j + 8.4); } }
//! FarPlane((210, 215), (302, 215), (302, 297), (210, 297));
//! ```
//!
//! Relative to the minimal grammar, `Draw` expressions carry a constant
//! offset (the lattice phase), and `SetPlane` carries the chart fields
//! needed to re-derive the rectification homography from the program alone.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{PlaneGeometry, PlaneLabel, Vec3};

#[derive(Debug, Error)]
pub enum DslError {
    #[error("syntax error at line {line}, column {col}: {msg}")]
    Syntax { line: usize, col: usize, msg: String },
    #[error("semantic error: {0}")]
    Semantic(String),
}

pub type Result<T> = std::result::Result<T, DslError>;

/// Value = ci * i + cj * j + c0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearExpr {
    pub ci: f64,
    pub cj: f64,
    pub c0: f64,
}

impl LinearExpr {
    pub fn eval(&self, i: i64, j: i64) -> f64 {
        self.ci * i as f64 + self.cj * j as f64 + self.c0
    }
}

/// Loop ranges and draw expressions of one plane block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoopSpec {
    pub outer: (i64, i64),
    pub inner: Option<(i64, i64)>,
    pub draw_x: LinearExpr,
    pub draw_y: LinearExpr,
}

impl LoopSpec {
    pub fn validate(&self) -> Result<()> {
        if self.outer.0 >= self.outer.1 {
            return Err(DslError::Semantic(format!(
                "empty outer range {:?}",
                self.outer
            )));
        }
        if let Some(inner) = self.inner {
            if inner.0 >= inner.1 {
                return Err(DslError::Semantic(format!("empty inner range {inner:?}")));
            }
        } else if self.draw_x.cj != 0.0 || self.draw_y.cj != 0.0 {
            return Err(DslError::Semantic(
                "draw expression references j but there is no inner loop".into(),
            ));
        }
        Ok(())
    }
}

/// One plane of the program: 3D chart plus lattice loops.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlaneBlock {
    pub pos: Vec3,
    pub normal: Vec3,
    pub axis_s: Vec3,
    pub axis_t: Vec3,
    /// [s_min, s_max, t_min, t_max] of the visible region in plane meters.
    pub bounds: [f64; 4],
    pub label: PlaneLabel,
    /// None marks a plane whose content was judged irregular: the plane
    /// geometry is still modeled but no lattice guides editing on it.
    pub loops: Option<LoopSpec>,
}

impl PlaneBlock {
    pub fn geometry(&self) -> PlaneGeometry {
        PlaneGeometry {
            point: self.pos,
            normal: self.normal,
            axis_s: self.axis_s,
            axis_t: self.axis_t,
            bounds: self.bounds,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraStmt {
    pub pos: Vec3,
    pub point_to: Vec3,
}

/// A full box program.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxProgram {
    pub camera: CameraStmt,
    pub planes: Vec<PlaneBlock>,
    /// Unmodeled far region as an image-pixel quad (inner views only).
    pub far_plane: Option<[(f64, f64); 4]>,
}

impl BoxProgram {
    pub fn validate(&self) -> Result<()> {
        let c = &self.camera;
        if c.pos == c.point_to {
            return Err(DslError::Semantic(
                "camera pos equals point_to (degenerate view direction)".into(),
            ));
        }
        if self.planes.len() != 2 && self.planes.len() != 4 {
            return Err(DslError::Semantic(format!(
                "a box program has 4 (inner) or 2 (outer) plane blocks, got {}",
                self.planes.len()
            )));
        }
        for p in &self.planes {
            let n2 = p.normal[0] * p.normal[0] + p.normal[1] * p.normal[1] + p.normal[2] * p.normal[2];
            if (n2.sqrt() - 1.0).abs() > 1e-6 {
                return Err(DslError::Semantic(format!(
                    "plane normal {:?} is not unit length",
                    p.normal
                )));
            }
            if let Some(loops) = &p.loops {
                loops.validate()?;
            }
        }
        Ok(())
    }

    pub fn is_inner(&self) -> bool {
        self.planes.len() == 4
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("program serializes")
    }

    pub fn from_json(text: &str) -> Result<BoxProgram> {
        let prog: BoxProgram = serde_json::from_str(text)
            .map_err(|e| DslError::Semantic(format!("json: {e}")))?;
        prog.validate()?;
        Ok(prog)
    }
}

/// The executable form of a plane's regularity: origin plus one or two
/// displacement vectors in rectified-canvas pixels, with loop ranges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lattice {
    pub origin: (f64, f64),
    pub d1: (f64, f64),
    pub d2: Option<(f64, f64)>,
    pub outer: (i64, i64),
    pub inner: Option<(i64, i64)>,
}

impl Lattice {
    /// |det [d1 d2]|, or |d1| for 1D lattices.
    pub fn basis_measure(&self) -> f64 {
        match self.d2 {
            Some(d2) => (self.d1.0 * d2.1 - self.d1.1 * d2.0).abs(),
            None => (self.d1.0 * self.d1.0 + self.d1.1 * self.d1.1).sqrt(),
        }
    }
}

/// Enumerate all (i, j) in the loop ranges and evaluate the draw
/// expressions. 1-level loops report j = 0.
pub fn execute_plane_program(loops: &LoopSpec) -> Vec<(i64, i64, (f64, f64))> {
    let inner = loops.inner.unwrap_or((0, 1));
    let mut out = Vec::new();
    for i in loops.outer.0..loops.outer.1 {
        for j in inner.0..inner.1 {
            out.push((i, j, (loops.draw_x.eval(i, j), loops.draw_y.eval(i, j))));
        }
    }
    out
}

pub fn loops_to_lattice(loops: &LoopSpec) -> Lattice {
    Lattice {
        origin: (loops.draw_x.c0, loops.draw_y.c0),
        d1: (loops.draw_x.ci, loops.draw_y.ci),
        d2: loops
            .inner
            .map(|_| (loops.draw_x.cj, loops.draw_y.cj)),
        outer: loops.outer,
        inner: loops.inner,
    }
}

pub fn lattice_to_loops(lat: &Lattice) -> LoopSpec {
    let (cjx, cjy) = lat.d2.unwrap_or((0.0, 0.0));
    LoopSpec {
        outer: lat.outer,
        inner: lat.inner,
        draw_x: LinearExpr {
            ci: lat.d1.0,
            cj: cjx,
            c0: lat.origin.0,
        },
        draw_y: LinearExpr {
            ci: lat.d1.1,
            cj: cjy,
            c0: lat.origin.1,
        },
    }
}

// ---------------------------------------------------------------------------
// printer

fn fmt_real(v: f64) -> String {
    // shortest representation that parses back to the same value
    format!("{v}")
}

fn fmt_vec3(v: Vec3) -> String {
    format!("({}, {}, {})", fmt_real(v[0]), fmt_real(v[1]), fmt_real(v[2]))
}

fn fmt_expr(e: &LinearExpr, has_inner: bool) -> String {
    let mut s = format!("{}*i", fmt_real(e.ci));
    if has_inner {
        s.push_str(&format!(" + {}*j", fmt_real(e.cj)));
    }
    s.push_str(&format!(" + {}", fmt_real(e.c0)));
    s
}

/// Emit the program's text form. `parse_program` inverts this exactly.
pub fn print_program(p: &BoxProgram) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "SetCamera(pos={}, point_to={});\n",
        fmt_vec3(p.camera.pos),
        fmt_vec3(p.camera.point_to)
    ));
    for plane in &p.planes {
        out.push_str(&format!(
            "SetPlane(pos={}, normal={}, axis_s={}, axis_t={}, bounds=({}, {}, {}, {}), label={});\n",
            fmt_vec3(plane.pos),
            fmt_vec3(plane.normal),
            fmt_vec3(plane.axis_s),
            fmt_vec3(plane.axis_t),
            fmt_real(plane.bounds[0]),
            fmt_real(plane.bounds[1]),
            fmt_real(plane.bounds[2]),
            fmt_real(plane.bounds[3]),
            plane.label,
        ));
        if let Some(loops) = &plane.loops {
            let has_inner = loops.inner.is_some();
            let draw = format!(
                "Draw(x={}, y={});",
                fmt_expr(&loops.draw_x, has_inner),
                fmt_expr(&loops.draw_y, has_inner)
            );
            match loops.inner {
                Some(inner) => out.push_str(&format!(
                    "For (i in range({}, {})) {{ For (j in range({}, {})) {{ {} }} }}\n",
                    loops.outer.0, loops.outer.1, inner.0, inner.1, draw
                )),
                None => out.push_str(&format!(
                    "For (i in range({}, {})) {{ {} }}\n",
                    loops.outer.0, loops.outer.1, draw
                )),
            }
        }
    }
    if let Some(q) = &p.far_plane {
        out.push_str(&format!(
            "FarPlane(({}, {}), ({}, {}), ({}, {}), ({}, {}));\n",
            fmt_real(q[0].0),
            fmt_real(q[0].1),
            fmt_real(q[1].0),
            fmt_real(q[1].1),
            fmt_real(q[2].0),
            fmt_real(q[2].1),
            fmt_real(q[3].0),
            fmt_real(q[3].1)
        ));
    }
    out
}

// ---------------------------------------------------------------------------
// parser

struct Lexer<'a> {
    src: &'a [u8],
    pos: usize,
    line: usize,
    col: usize,
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Num(f64),
    Punct(char),
    Eof,
}

impl<'a> Lexer<'a> {
    fn new(src: &'a str) -> Self {
        Lexer {
            src: src.as_bytes(),
            pos: 0,
            line: 1,
            col: 1,
        }
    }

    fn err(&self, msg: impl Into<String>) -> DslError {
        DslError::Syntax {
            line: self.line,
            col: self.col,
            msg: msg.into(),
        }
    }

    fn bump(&mut self) -> Option<u8> {
        let c = self.src.get(self.pos).copied()?;
        self.pos += 1;
        if c == b'\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(c)
    }

    fn skip_ws(&mut self) {
        while let Some(&c) = self.src.get(self.pos) {
            if c.is_ascii_whitespace() {
                self.bump();
            } else {
                break;
            }
        }
    }

    fn next(&mut self) -> Result<Tok> {
        self.skip_ws();
        let Some(&c) = self.src.get(self.pos) else {
            return Ok(Tok::Eof);
        };
        if c.is_ascii_alphabetic() || c == b'_' {
            let start = self.pos;
            while let Some(&c) = self.src.get(self.pos) {
                if c.is_ascii_alphanumeric() || c == b'_' {
                    self.bump();
                } else {
                    break;
                }
            }
            let s = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
            return Ok(Tok::Ident(s.to_string()));
        }
        if c.is_ascii_digit()
            || (c == b'-' && self.src.get(self.pos + 1).is_some_and(|d| d.is_ascii_digit() || *d == b'.'))
            || c == b'.'
        {
            let start = self.pos;
            if c == b'-' {
                self.bump();
            }
            while let Some(&c) = self.src.get(self.pos) {
                if c.is_ascii_digit() || c == b'.' || c == b'e' || c == b'E' {
                    self.bump();
                    // exponent sign
                    if (c == b'e' || c == b'E')
                        && self.src.get(self.pos).is_some_and(|&d| d == b'+' || d == b'-')
                    {
                        self.bump();
                    }
                } else {
                    break;
                }
            }
            let s = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
            let v: f64 = s
                .parse()
                .map_err(|_| self.err(format!("invalid number {s:?}")))?;
            return Ok(Tok::Num(v));
        }
        if b"(),;={}*+-".contains(&c) {
            self.bump();
            return Ok(Tok::Punct(c as char));
        }
        Err(self.err(format!("unexpected character {:?}", c as char)))
    }
}

struct Parser<'a> {
    lex: Lexer<'a>,
    peeked: Option<Tok>,
}

impl<'a> Parser<'a> {
    fn new(src: &'a str) -> Self {
        Parser {
            lex: Lexer::new(src),
            peeked: None,
        }
    }

    fn err(&self, msg: impl Into<String>) -> DslError {
        self.lex.err(msg)
    }

    fn next(&mut self) -> Result<Tok> {
        match self.peeked.take() {
            Some(t) => Ok(t),
            None => self.lex.next(),
        }
    }

    fn peek(&mut self) -> Result<&Tok> {
        if self.peeked.is_none() {
            self.peeked = Some(self.lex.next()?);
        }
        Ok(self.peeked.as_ref().unwrap())
    }

    fn expect_punct(&mut self, c: char) -> Result<()> {
        match self.next()? {
            Tok::Punct(p) if p == c => Ok(()),
            other => Err(self.err(format!("expected {c:?}, found {other:?}"))),
        }
    }

    fn expect_ident(&mut self, name: &str) -> Result<()> {
        match self.next()? {
            Tok::Ident(s) if s == name => Ok(()),
            other => Err(self.err(format!("expected {name:?}, found {other:?}"))),
        }
    }

    fn ident(&mut self) -> Result<String> {
        match self.next()? {
            Tok::Ident(s) => Ok(s),
            other => Err(self.err(format!("expected identifier, found {other:?}"))),
        }
    }

    fn number(&mut self) -> Result<f64> {
        match self.next()? {
            Tok::Num(v) => Ok(v),
            Tok::Punct('-') => Ok(-self.number()?),
            other => Err(self.err(format!("expected number, found {other:?}"))),
        }
    }

    fn integer(&mut self) -> Result<i64> {
        let v = self.number()?;
        if v.fract() != 0.0 {
            return Err(self.err(format!("expected integer, found {v}")));
        }
        Ok(v as i64)
    }

    fn vec2(&mut self) -> Result<(f64, f64)> {
        self.expect_punct('(')?;
        let x = self.number()?;
        self.expect_punct(',')?;
        let y = self.number()?;
        self.expect_punct(')')?;
        Ok((x, y))
    }

    fn vec3(&mut self) -> Result<Vec3> {
        self.expect_punct('(')?;
        let x = self.number()?;
        self.expect_punct(',')?;
        let y = self.number()?;
        self.expect_punct(',')?;
        let z = self.number()?;
        self.expect_punct(')')?;
        Ok([x, y, z])
    }

    fn kw_vec3(&mut self, name: &str) -> Result<Vec3> {
        self.expect_ident(name)?;
        self.expect_punct('=')?;
        self.vec3()
    }

    /// Parse `R*i [+ R*j] + R` (terms in this order; the j term requires an
    /// inner loop, the constant is the lattice phase).
    fn linear_expr(&mut self) -> Result<(LinearExpr, bool)> {
        let mut e = LinearExpr {
            ci: 0.0,
            cj: 0.0,
            c0: 0.0,
        };
        let mut has_j = false;
        loop {
            let coeff = self.number()?;
            if matches!(self.peek()?, Tok::Punct('*')) {
                self.expect_punct('*')?;
                match self.ident()?.as_str() {
                    "i" => e.ci = coeff,
                    "j" => {
                        e.cj = coeff;
                        has_j = true;
                    }
                    other => return Err(self.err(format!("expected loop variable, found {other:?}"))),
                }
            } else {
                e.c0 = coeff;
                break;
            }
            match self.peek()? {
                Tok::Punct('+') => {
                    self.next()?;
                }
                _ => break,
            }
        }
        Ok((e, has_j))
    }

    fn range(&mut self) -> Result<(i64, i64)> {
        self.expect_ident("range")?;
        self.expect_punct('(')?;
        let lo = self.integer()?;
        self.expect_punct(',')?;
        let hi = self.integer()?;
        self.expect_punct(')')?;
        Ok((lo, hi))
    }

    fn draw_stmt(&mut self) -> Result<(LinearExpr, LinearExpr)> {
        self.expect_ident("Draw")?;
        self.expect_punct('(')?;
        self.expect_ident("x")?;
        self.expect_punct('=')?;
        let (x, _) = self.linear_expr()?;
        self.expect_punct(',')?;
        self.expect_ident("y")?;
        self.expect_punct('=')?;
        let (y, _) = self.linear_expr()?;
        self.expect_punct(')')?;
        self.expect_punct(';')?;
        Ok((x, y))
    }

    fn for_stmt(&mut self) -> Result<LoopSpec> {
        // "For" already consumed
        self.expect_punct('(')?;
        self.expect_ident("i")?;
        self.expect_ident("in")?;
        let outer = self.range()?;
        self.expect_punct(')')?;
        self.expect_punct('{')?;
        let (inner, draw_x, draw_y) = match self.peek()? {
            Tok::Ident(s) if s == "For" => {
                self.next()?;
                self.expect_punct('(')?;
                self.expect_ident("j")?;
                self.expect_ident("in")?;
                let inner = self.range()?;
                self.expect_punct(')')?;
                self.expect_punct('{')?;
                let (x, y) = self.draw_stmt()?;
                self.expect_punct('}')?;
                (Some(inner), x, y)
            }
            _ => {
                let (x, y) = self.draw_stmt()?;
                (None, x, y)
            }
        };
        self.expect_punct('}')?;
        Ok(LoopSpec {
            outer,
            inner,
            draw_x,
            draw_y,
        })
    }

    fn program(&mut self) -> Result<BoxProgram> {
        self.expect_ident("SetCamera")?;
        self.expect_punct('(')?;
        let pos = self.kw_vec3("pos")?;
        self.expect_punct(',')?;
        let point_to = self.kw_vec3("point_to")?;
        self.expect_punct(')')?;
        self.expect_punct(';')?;
        let camera = CameraStmt { pos, point_to };

        let mut planes = Vec::new();
        let mut far_plane = None;
        loop {
            match self.next()? {
                Tok::Eof => break,
                Tok::Ident(s) if s == "SetPlane" => {
                    self.expect_punct('(')?;
                    let pos = self.kw_vec3("pos")?;
                    self.expect_punct(',')?;
                    let normal = self.kw_vec3("normal")?;
                    self.expect_punct(',')?;
                    let axis_s = self.kw_vec3("axis_s")?;
                    self.expect_punct(',')?;
                    let axis_t = self.kw_vec3("axis_t")?;
                    self.expect_punct(',')?;
                    self.expect_ident("bounds")?;
                    self.expect_punct('=')?;
                    self.expect_punct('(')?;
                    let b0 = self.number()?;
                    self.expect_punct(',')?;
                    let b1 = self.number()?;
                    self.expect_punct(',')?;
                    let b2 = self.number()?;
                    self.expect_punct(',')?;
                    let b3 = self.number()?;
                    self.expect_punct(')')?;
                    self.expect_punct(',')?;
                    self.expect_ident("label")?;
                    self.expect_punct('=')?;
                    let label: PlaneLabel = self
                        .ident()?
                        .parse()
                        .map_err(|e: String| self.err(e))?;
                    self.expect_punct(')')?;
                    self.expect_punct(';')?;
                    planes.push(PlaneBlock {
                        pos,
                        normal,
                        axis_s,
                        axis_t,
                        bounds: [b0, b1, b2, b3],
                        label,
                        loops: None,
                    });
                }
                Tok::Ident(s) if s == "For" => {
                    let loops = self.for_stmt()?;
                    let plane = planes
                        .last_mut()
                        .ok_or_else(|| self.err("For block before any SetPlane"))?;
                    if plane.loops.is_some() {
                        return Err(self.err("plane already has a For block"));
                    }
                    plane.loops = Some(loops);
                }
                Tok::Ident(s) if s == "FarPlane" => {
                    self.expect_punct('(')?;
                    let a = self.vec2()?;
                    self.expect_punct(',')?;
                    let b = self.vec2()?;
                    self.expect_punct(',')?;
                    let c = self.vec2()?;
                    self.expect_punct(',')?;
                    let d = self.vec2()?;
                    self.expect_punct(')')?;
                    self.expect_punct(';')?;
                    far_plane = Some([a, b, c, d]);
                }
                other => return Err(self.err(format!("unexpected token {other:?}"))),
            }
        }
        Ok(BoxProgram {
            camera,
            planes,
            far_plane,
        })
    }
}

/// Parse the text form. Validates semantics (non-degenerate camera, unit
/// normals, non-empty ranges) after a successful parse.
pub fn parse_program(text: &str) -> Result<BoxProgram> {
    let prog = Parser::new(text).program()?;
    prog.validate()?;
    Ok(prog)
}
