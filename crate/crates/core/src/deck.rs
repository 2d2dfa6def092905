//! Keyword input-deck parser.
//!
//! Plain-text sectioned format, `#` comments, case-insensitive keywords,
//! field units. The full schema lives in `docs/formats.md`. Parsing produces
//! a [`SimDeck`]; the driver turns it into a runnable model.

use crate::grid::Axis;
use crate::scalar::{lit, Scalar};
use crate::wells::{ControlMode, WellKind};
use thiserror::Error;

#[derive(Debug, Error)]
#[error("{file}:{line}:{col}: {message}")]
pub struct DeckError {
    pub file: String,
    pub line: usize,
    pub col: usize,
    pub message: String,
}

/// Uniform value or explicit per-entry list.
#[derive(Clone, Debug)]
pub enum AxisSizes<S> {
    Uniform(S),
    PerCell(Vec<S>),
}

impl<S: Scalar> AxisSizes<S> {
    pub fn expand(&self, n: usize) -> Vec<S> {
        match self {
            AxisSizes::Uniform(v) => vec![*v; n],
            AxisSizes::PerCell(v) => v.clone(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct GridSection<S> {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
    pub dx: AxisSizes<S>,
    pub dy: AxisSizes<S>,
    pub dz: AxisSizes<S>,
    pub tops: S,
    /// `true`: TOPS is the depth of the top-layer cell centers (default);
    /// `false`: TOPS is the top face depth.
    pub tops_is_center: bool,
}

#[derive(Clone, Debug)]
pub struct RockSection<S> {
    pub perm: [S; 3],
    pub poro: S,
    pub crock: S,
    pub pref: S,
}

#[derive(Clone, Copy, Debug)]
pub enum ShapeSpec<S> {
    Kazemi,
    WarrenRoot { sets: u32, spacing: S },
    Sigma(S),
}

#[derive(Clone, Copy, Debug)]
pub enum SpacingEntry<S> {
    Value(S),
    Inactive,
}

#[derive(Clone, Debug)]
pub struct FractureExtras<S> {
    pub shape: ShapeSpec<S>,
    pub spacing: Option<[SpacingEntry<S>; 3]>,
    pub transfer_perm_avg: bool,
}

#[derive(Clone, Copy, Debug)]
pub struct PvtLine<S> {
    pub pref: S,
    pub bref: S,
    pub comp: S,
    pub visc: S,
    pub dens: S,
}

#[derive(Clone, Debug)]
pub struct PvtSection<S> {
    pub oil: PvtLine<S>,
    pub water: PvtLine<S>,
    pub linear_fvf: bool,
}

#[derive(Clone, Debug)]
pub enum SatFuncSpec<S> {
    Corey { swc: S, sor: S, krw_max: S, kro_max: S, nw: S, no: S, n_points: usize },
    Table(Vec<[S; 4]>),
}

#[derive(Clone, Debug)]
pub struct PerfSpec<S> {
    pub i: usize,
    pub j: usize,
    pub k: usize,
    pub wi: Option<S>,
    pub kh: Option<KhEntry<S>>,
    pub rw: Option<S>,
    pub skin: S,
    pub wfrac: S,
    pub wg: S,
    pub radius_peaceman: bool,
    pub direction: Axis,
}

#[derive(Clone, Copy, Debug)]
pub enum KhEntry<S> {
    Value(S),
    Auto,
}

#[derive(Clone, Debug)]
pub struct WellSection<S> {
    pub name: String,
    pub kind: WellKind,
    pub perfs: Vec<PerfSpec<S>>,
    pub rate_max: Option<S>,
    pub bhp_limit: Option<S>,
    pub ref_depth: Option<S>,
    pub mode: ControlMode,
}

#[derive(Clone, Debug)]
pub enum WellAction<S> {
    SetRateMax(S),
    SetBhpLimit(S),
}

#[derive(Clone, Debug)]
pub struct ScheduleChange<S> {
    pub time: S,
    pub well: String,
    pub action: WellAction<S>,
}

#[derive(Clone, Debug)]
pub struct ScheduleSection<S> {
    pub t_stop: S,
    pub report_interval: Option<S>,
    pub changes: Vec<ScheduleChange<S>>,
}

#[derive(Clone, Debug)]
pub struct SolverSection<S> {
    pub epsilon: Option<S>,
    pub max_newton: Option<usize>,
    pub forcing: Option<ForcingSpec<S>>,
    pub gmres_restart: Option<usize>,
    pub gmres_max_iter: Option<usize>,
    pub precond: Option<PrecondSpec>,
    pub pressure_set: Option<Vec<usize>>,
    pub dt_init: Option<S>,
    pub dt_min: Option<S>,
    pub dt_max: Option<S>,
    pub dt_grow: Option<S>,
    pub dt_cut: Option<S>,
    pub max_cuts: Option<usize>,
    pub residual_scaling: Option<bool>,
    pub partitions: Option<usize>,
    pub max_dp: Option<S>,
    pub max_ds: Option<S>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ForcingSpec<S> {
    Ew1,
    Ew2,
    Ew3 { gamma: S, beta: S },
    Constant(S),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PrecondSpec {
    Cpr,
    Ilu0,
    None,
}

#[derive(Clone, Copy, Debug)]
pub struct InitSection<S> {
    pub p_f: S,
    pub p_m: S,
    pub s_wf: S,
    pub s_wm: S,
}

#[derive(Clone, Copy, Debug, Default)]
pub struct OutputSection {
    pub snapshots_every: usize,
}

/// Parsed deck, syntactic level.
#[derive(Clone, Debug)]
pub struct SimDeck<S> {
    pub title: String,
    pub grid: GridSection<S>,
    pub matrix: RockSection<S>,
    pub fracture: RockSection<S>,
    pub fracture_extras: FractureExtras<S>,
    pub pvt: PvtSection<S>,
    pub sat_matrix: SatFuncSpec<S>,
    pub sat_fracture: SatFuncSpec<S>,
    pub wells: Vec<WellSection<S>>,
    pub schedule: ScheduleSection<S>,
    pub solver: SolverSection<S>,
    pub init: InitSection<S>,
    pub output: OutputSection,
}

struct Tok {
    text: String,
    upper: String,
    line: usize,
    col: usize,
}

struct Cursor {
    file: String,
    toks: Vec<Tok>,
    pos: usize,
}

impl Cursor {
    fn tokenize(file: &str, text: &str) -> Self {
        let mut toks = Vec::new();
        for (li, raw) in text.lines().enumerate() {
            let line = match raw.find('#') {
                Some(p) => &raw[..p],
                None => raw,
            };
            let mut col = 0usize;
            for piece in line.split_whitespace() {
                col = line[col..].find(piece).map(|o| o + col).unwrap_or(col);
                toks.push(Tok {
                    text: piece.to_string(),
                    upper: piece.to_ascii_uppercase(),
                    line: li + 1,
                    col: col + 1,
                });
                col += piece.len();
            }
        }
        Cursor { file: file.to_string(), toks, pos: 0 }
    }

    fn at_end(&self) -> bool {
        self.pos >= self.toks.len()
    }

    fn peek_upper(&self) -> Option<&str> {
        self.toks.get(self.pos).map(|t| t.upper.as_str())
    }

    fn next(&mut self) -> Option<&Tok> {
        let t = self.toks.get(self.pos);
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn here(&self) -> (usize, usize) {
        self.toks
            .get(self.pos.min(self.toks.len().saturating_sub(1)))
            .map(|t| (t.line, t.col))
            .unwrap_or((0, 0))
    }

    fn err(&self, message: impl Into<String>) -> DeckError {
        let (line, col) = self.here();
        DeckError { file: self.file.clone(), line, col, message: message.into() }
    }

    fn err_at(&self, tok: &Tok, message: impl Into<String>) -> DeckError {
        DeckError { file: self.file.clone(), line: tok.line, col: tok.col, message: message.into() }
    }

    fn expect_word(&mut self, what: &str) -> Result<(String, String), DeckError> {
        match self.next() {
            Some(t) => Ok((t.text.clone(), t.upper.clone())),
            None => Err(self.err(format!("unexpected end of deck, expected {what}"))),
        }
    }

    fn expect_keyword(&mut self, kw: &str) -> Result<(), DeckError> {
        let (_, upper) = self.expect_word(kw)?;
        if upper != kw {
            self.pos -= 1;
            return Err(self.err(format!("expected {kw}, found '{upper}'")));
        }
        Ok(())
    }

    fn number<S: Scalar>(&mut self, what: &str) -> Result<S, DeckError> {
        let tok = match self.next() {
            Some(t) => t,
            None => return Err(self.err(format!("unexpected end of deck, expected {what}"))),
        };
        match tok.text.parse::<f64>() {
            Ok(v) => Ok(lit(v)),
            Err(_) => {
                let msg = format!("expected a number for {what}, found '{}'", tok.text);
                let t = Tok { text: tok.text.clone(), upper: tok.upper.clone(), line: tok.line, col: tok.col };
                Err(self.err_at(&t, msg))
            }
        }
    }

    fn integer(&mut self, what: &str) -> Result<usize, DeckError> {
        let tok = match self.next() {
            Some(t) => t,
            None => return Err(self.err(format!("unexpected end of deck, expected {what}"))),
        };
        match tok.text.parse::<usize>() {
            Ok(v) => Ok(v),
            Err(_) => {
                let msg = format!("expected an integer for {what}, found '{}'", tok.text);
                let t = Tok { text: tok.text.clone(), upper: tok.upper.clone(), line: tok.line, col: tok.col };
                Err(self.err_at(&t, msg))
            }
        }
    }

    /// Next token looks like a number (starts a value list entry)?
    fn peek_is_number(&self) -> bool {
        match self.toks.get(self.pos) {
            Some(t) => {
                t.text.parse::<f64>().is_ok()
                    || t.text.contains('*') && {
                        let mut it = t.text.splitn(2, '*');
                        let a = it.next().unwrap_or("");
                        let b = it.next().unwrap_or("");
                        a.parse::<usize>().is_ok() && b.parse::<f64>().is_ok()
                    }
            }
            None => false,
        }
    }

    /// Value list with `N*V` repeat syntax, at least one entry.
    fn number_list<S: Scalar>(&mut self, what: &str) -> Result<Vec<S>, DeckError> {
        let mut out: Vec<S> = Vec::new();
        while self.peek_is_number() {
            let tok = self.next().expect("peeked");
            if let Some((n, v)) = tok.text.split_once('*') {
                let n: usize = n.parse().expect("peeked");
                let v: f64 = v.parse().expect("peeked");
                out.extend(std::iter::repeat_n(lit::<S>(v), n));
            } else {
                out.push(lit(tok.text.parse::<f64>().expect("peeked")));
            }
        }
        if out.is_empty() {
            return Err(self.err(format!("expected one or more numbers for {what}")));
        }
        Ok(out)
    }
}

pub fn parse_deck_str<S: Scalar>(text: &str, file: &str) -> Result<SimDeck<S>, DeckError> {
    let mut cur = Cursor::tokenize(file, text);
    let mut title = String::new();
    let mut grid: Option<GridSection<S>> = None;
    let mut matrix: Option<RockSection<S>> = None;
    let mut fracture: Option<(RockSection<S>, FractureExtras<S>)> = None;
    let mut pvt: Option<PvtSection<S>> = None;
    let mut sat_matrix: Option<SatFuncSpec<S>> = None;
    let mut sat_fracture: Option<SatFuncSpec<S>> = None;
    let mut wells: Vec<WellSection<S>> = Vec::new();
    let mut schedule: Option<ScheduleSection<S>> = None;
    let mut solver = SolverSection::<S>::empty();
    let mut init: Option<InitSection<S>> = None;
    let mut output = OutputSection::default();

    while !cur.at_end() {
        let (word, upper) = cur.expect_word("a section keyword")?;
        match upper.as_str() {
            "TITLE" => {
                // consume the rest of the physical line
                let line = cur.toks[cur.pos - 1].line;
                let mut parts = Vec::new();
                while let Some(t) = cur.toks.get(cur.pos) {
                    if t.line != line {
                        break;
                    }
                    parts.push(t.text.clone());
                    cur.pos += 1;
                }
                title = parts.join(" ");
            }
            "GRID" => grid = Some(parse_grid(&mut cur)?),
            "MATRIX" => matrix = Some(parse_rock(&mut cur, "MATRIX")?.0),
            "FRACTURE" => fracture = Some(parse_rock(&mut cur, "FRACTURE")?),
            "PVT" => pvt = Some(parse_pvt(&mut cur)?),
            "SATFUNC" => {
                let (_, which) = cur.expect_word("MATRIX or FRACTURE")?;
                let spec = parse_satfunc(&mut cur)?;
                match which.as_str() {
                    "MATRIX" => sat_matrix = Some(spec),
                    "FRACTURE" => sat_fracture = Some(spec),
                    other => return Err(cur.err(format!("SATFUNC expects MATRIX or FRACTURE, found '{other}'"))),
                }
            }
            "WELL" => wells.push(parse_well(&mut cur)?),
            "SCHEDULE" => schedule = Some(parse_schedule(&mut cur)?),
            "SOLVER" => parse_solver(&mut cur, &mut solver)?,
            "INIT" => init = Some(parse_init(&mut cur)?),
            "OUTPUT" => {
                loop {
                    let (_, kw) = cur.expect_word("OUTPUT keyword or END")?;
                    match kw.as_str() {
                        "END" => break,
                        "SNAPSHOTS" => output.snapshots_every = cur.integer("SNAPSHOTS interval")?,
                        other => return Err(cur.err(format!("unknown OUTPUT keyword '{other}'"))),
                    }
                }
            }
            _ => {
                cur.pos -= 1;
                return Err(cur.err(format!("unknown keyword '{word}'")));
            }
        }
    }

    let grid = grid.ok_or_else(|| cur.err("missing GRID section"))?;
    let matrix = matrix.ok_or_else(|| cur.err("missing MATRIX section"))?;
    let (fracture, fracture_extras) = fracture.ok_or_else(|| cur.err("missing FRACTURE section"))?;
    let pvt = pvt.ok_or_else(|| cur.err("missing PVT section"))?;
    let sat_matrix = sat_matrix.ok_or_else(|| cur.err("missing SATFUNC MATRIX section"))?;
    let sat_fracture = sat_fracture.ok_or_else(|| cur.err("missing SATFUNC FRACTURE section"))?;
    let schedule = schedule.ok_or_else(|| cur.err("missing SCHEDULE section"))?;
    let init = init.ok_or_else(|| cur.err("missing INIT section"))?;

    let deck = SimDeck {
        title,
        grid,
        matrix,
        fracture,
        fracture_extras,
        pvt,
        sat_matrix,
        sat_fracture,
        wells,
        schedule,
        solver,
        init,
        output,
    };
    validate(&deck, &cur)?;
    Ok(deck)
}

pub fn parse_deck_file<S: Scalar>(path: &std::path::Path) -> Result<SimDeck<S>, DeckError> {
    let text = std::fs::read_to_string(path).map_err(|e| DeckError {
        file: path.display().to_string(),
        line: 0,
        col: 0,
        message: format!("cannot read deck: {e}"),
    })?;
    parse_deck_str(&text, &path.display().to_string())
}

impl<S: Scalar> SolverSection<S> {
    fn empty() -> Self {
        SolverSection {
            epsilon: None,
            max_newton: None,
            forcing: None,
            gmres_restart: None,
            gmres_max_iter: None,
            precond: None,
            pressure_set: None,
            dt_init: None,
            dt_min: None,
            dt_max: None,
            dt_grow: None,
            dt_cut: None,
            max_cuts: None,
            residual_scaling: None,
            partitions: None,
            max_dp: None,
            max_ds: None,
        }
    }
}

fn parse_grid<S: Scalar>(cur: &mut Cursor) -> Result<GridSection<S>, DeckError> {
    let mut nx = None;
    let mut dx = None;
    let mut dy = None;
    let mut dz = None;
    let mut tops = None;
    let mut tops_is_center = true;
    loop {
        let (_, kw) = cur.expect_word("GRID keyword or END")?;
        match kw.as_str() {
            "END" => break,
            "DIMENS" => {
                let dimens_tok = cur.pos - 1;
                let a = cur.integer("nx")?;
                let b = cur.integer("ny")?;
                let c = cur.integer("nz")?;
                if a == 0 || b == 0 || c == 0 {
                    let t = &cur.toks[dimens_tok];
                    return Err(DeckError {
                        file: cur.file.clone(),
                        line: t.line,
                        col: t.col,
                        message: format!("DIMENS requires positive cell counts, got {a} {b} {c}"),
                    });
                }
                nx = Some((a, b, c));
            }
            "DX" => dx = Some(parse_axis_sizes(cur, "DX")?),
            "DY" => dy = Some(parse_axis_sizes(cur, "DY")?),
            "DZ" => dz = Some(parse_axis_sizes(cur, "DZ")?),
            "TOPS" => {
                tops = Some(cur.number::<S>("TOPS depth")?);
                if let Some(mode) = cur.peek_upper() {
                    match mode {
                        "CENTER" => {
                            tops_is_center = true;
                            cur.pos += 1;
                        }
                        "FACE" => {
                            tops_is_center = false;
                            cur.pos += 1;
                        }
                        _ => {}
                    }
                }
            }
            other => return Err(cur.err(format!("unknown GRID keyword '{other}'"))),
        }
    }
    let (nx, ny, nz) = nx.ok_or_else(|| cur.err("GRID is missing DIMENS"))?;
    Ok(GridSection {
        nx,
        ny,
        nz,
        dx: dx.ok_or_else(|| cur.err("GRID is missing DX"))?,
        dy: dy.ok_or_else(|| cur.err("GRID is missing DY"))?,
        dz: dz.ok_or_else(|| cur.err("GRID is missing DZ"))?,
        tops: tops.ok_or_else(|| cur.err("GRID is missing TOPS"))?,
        tops_is_center,
    })
}

fn parse_axis_sizes<S: Scalar>(cur: &mut Cursor, what: &str) -> Result<AxisSizes<S>, DeckError> {
    let values = cur.number_list::<S>(what)?;
    Ok(if values.len() == 1 { AxisSizes::Uniform(values[0]) } else { AxisSizes::PerCell(values) })
}

fn parse_rock<S: Scalar>(
    cur: &mut Cursor,
    section: &str,
) -> Result<(RockSection<S>, FractureExtras<S>), DeckError> {
    let mut perm = [None; 3];
    let mut poro = None;
    let mut crock = None;
    let mut pref = None;
    let mut shape = ShapeSpec::Kazemi;
    let mut spacing = None;
    let mut transfer_perm_avg = false;
    loop {
        let (_, kw) = cur.expect_word("rock keyword or END")?;
        match kw.as_str() {
            "END" => break,
            "PERMX" => perm[0] = Some(cur.number::<S>("PERMX")?),
            "PERMY" => perm[1] = Some(cur.number::<S>("PERMY")?),
            "PERMZ" => perm[2] = Some(cur.number::<S>("PERMZ")?),
            "PORO" => poro = Some(cur.number::<S>("PORO")?),
            "CROCK" => crock = Some(cur.number::<S>("CROCK")?),
            "PREF" => pref = Some(cur.number::<S>("PREF")?),
            "SHAPE" if section == "FRACTURE" => {
                let (_, model) = cur.expect_word("shape factor model")?;
                shape = match model.as_str() {
                    "KAZEMI" => ShapeSpec::Kazemi,
                    "WARREN_ROOT" => {
                        let sets = cur.integer("fracture set count")? as u32;
                        let l = cur.number::<S>("representative spacing")?;
                        ShapeSpec::WarrenRoot { sets, spacing: l }
                    }
                    "SIGMA" => ShapeSpec::Sigma(cur.number::<S>("shape factor value")?),
                    other => return Err(cur.err(format!("unknown shape factor model '{other}'"))),
                };
            }
            "SPACING" if section == "FRACTURE" => {
                let mut sp = [SpacingEntry::Inactive; 3];
                for entry in sp.iter_mut() {
                    let (text, upper) = cur.expect_word("spacing value or *")?;
                    *entry = if upper == "*" {
                        SpacingEntry::Inactive
                    } else {
                        match text.parse::<f64>() {
                            Ok(v) => SpacingEntry::Value(lit(v)),
                            Err(_) => return Err(cur.err(format!("bad SPACING entry '{text}'"))),
                        }
                    };
                }
                spacing = Some(sp);
            }
            "TRANSFER_PERM" if section == "FRACTURE" => {
                let (_, which) = cur.expect_word("X or AVG")?;
                transfer_perm_avg = match which.as_str() {
                    "X" => false,
                    "AVG" => true,
                    other => return Err(cur.err(format!("TRANSFER_PERM expects X or AVG, found '{other}'"))),
                };
            }
            other => return Err(cur.err(format!("unknown {section} keyword '{other}'"))),
        }
    }
    let need = |v: Option<S>, what: &str| v.ok_or_else(|| cur.err(format!("{section} is missing {what}")));
    let rock = RockSection {
        perm: [need(perm[0], "PERMX")?, need(perm[1], "PERMY")?, need(perm[2], "PERMZ")?],
        poro: need(poro, "PORO")?,
        crock: need(crock, "CROCK")?,
        pref: need(pref, "PREF")?,
    };
    Ok((rock, FractureExtras { shape, spacing, transfer_perm_avg }))
}

fn parse_pvt<S: Scalar>(cur: &mut Cursor) -> Result<PvtSection<S>, DeckError> {
    let mut oil = None;
    // defaults for water when the deck omits the line
    let mut water = PvtLine {
        pref: lit::<S>(15.0),
        bref: lit(1.0),
        comp: lit(3e-6),
        visc: lit(0.5),
        dens: lit(62.4),
    };
    let mut linear_fvf = false;
    loop {
        let (_, kw) = cur.expect_word("PVT keyword or END")?;
        match kw.as_str() {
            "END" => break,
            "OIL" => {
                oil = Some(PvtLine {
                    pref: cur.number("oil reference pressure")?,
                    bref: cur.number("oil B at reference")?,
                    comp: cur.number("oil compressibility")?,
                    visc: cur.number("oil viscosity")?,
                    dens: cur.number("oil stock-tank density")?,
                });
            }
            "WATER" => {
                water = PvtLine {
                    pref: cur.number("water reference pressure")?,
                    bref: cur.number("water B at reference")?,
                    comp: cur.number("water compressibility")?,
                    visc: cur.number("water viscosity")?,
                    dens: cur.number("water stock-tank density")?,
                };
            }
            "BMODEL" => {
                let (_, which) = cur.expect_word("EXP or LINEAR")?;
                linear_fvf = match which.as_str() {
                    "EXP" => false,
                    "LINEAR" => true,
                    other => return Err(cur.err(format!("BMODEL expects EXP or LINEAR, found '{other}'"))),
                };
            }
            other => return Err(cur.err(format!("unknown PVT keyword '{other}'"))),
        }
    }
    Ok(PvtSection { oil: oil.ok_or_else(|| cur.err("PVT is missing the OIL line"))?, water, linear_fvf })
}

fn parse_satfunc<S: Scalar>(cur: &mut Cursor) -> Result<SatFuncSpec<S>, DeckError> {
    let mut rows: Vec<[S; 4]> = Vec::new();
    let mut corey = None;
    loop {
        let (_, kw) = cur.expect_word("SATFUNC keyword or END")?;
        match kw.as_str() {
            "END" => break,
            "ROW" => {
                rows.push([
                    cur.number("s_w")?,
                    cur.number("k_rw")?,
                    cur.number("k_ro")?,
                    cur.number("p_cow")?,
                ]);
            }
            "COREY" => {
                let swc = cur.number("swc")?;
                let sor = cur.number("sor")?;
                let krw_max = cur.number("krw endpoint")?;
                let kro_max = cur.number("kro endpoint")?;
                let nw = cur.number("water exponent")?;
                let no = cur.number("oil exponent")?;
                let n_points = if cur.peek_is_number() { cur.integer("sample count")? } else { 21 };
                corey = Some(SatFuncSpec::Corey { swc, sor, krw_max, kro_max, nw, no, n_points });
            }
            other => return Err(cur.err(format!("unknown SATFUNC keyword '{other}'"))),
        }
    }
    match (corey, rows.is_empty()) {
        (Some(c), true) => Ok(c),
        (None, false) => Ok(SatFuncSpec::Table(rows)),
        (Some(_), false) => Err(cur.err("SATFUNC cannot mix COREY and ROW entries")),
        (None, true) => Err(cur.err("SATFUNC needs a COREY line or ROW entries")),
    }
}

fn parse_well<S: Scalar>(cur: &mut Cursor) -> Result<WellSection<S>, DeckError> {
    let (name, _) = cur.expect_word("well name")?;
    let (_, kind_word) = cur.expect_word("INJECTOR or PRODUCER")?;
    let kind = match kind_word.as_str() {
        "INJECTOR" => WellKind::Injector,
        "PRODUCER" => WellKind::Producer,
        other => return Err(cur.err(format!("expected INJECTOR or PRODUCER, found '{other}'"))),
    };
    let mut perfs = Vec::new();
    let mut rate_max = None;
    let mut bhp_limit = None;
    let mut ref_depth = None;
    let mut mode = ControlMode::Rate;
    loop {
        let (_, kw) = cur.expect_word("WELL keyword or END")?;
        match kw.as_str() {
            "END" => break,
            "PERF" => {
                let i = cur.integer("perforation i")?;
                let j = cur.integer("perforation j")?;
                let k = cur.integer("perforation k")?;
                if i == 0 || j == 0 || k == 0 {
                    return Err(cur.err("perforation indices are 1-based"));
                }
                let mut perf = PerfSpec {
                    i,
                    j,
                    k,
                    wi: None,
                    kh: None,
                    rw: None,
                    skin: S::zero(),
                    wfrac: S::one(),
                    wg: S::one(),
                    radius_peaceman: true,
                    direction: Axis::Z,
                };
                while let Some(kw2) = cur.peek_upper() {
                    match kw2 {
                        "WI" => {
                            cur.pos += 1;
                            perf.wi = Some(cur.number("well index")?);
                        }
                        "KH" => {
                            cur.pos += 1;
                            let (text, upper) = cur.expect_word("KH value or AUTO")?;
                            perf.kh = Some(if upper == "AUTO" {
                                KhEntry::Auto
                            } else {
                                match text.parse::<f64>() {
                                    Ok(v) => KhEntry::Value(lit(v)),
                                    Err(_) => return Err(cur.err(format!("bad KH value '{text}'"))),
                                }
                            });
                        }
                        "RW" => {
                            cur.pos += 1;
                            perf.rw = Some(cur.number("wellbore radius")?);
                        }
                        "SKIN" => {
                            cur.pos += 1;
                            perf.skin = cur.number("skin")?;
                        }
                        "WFRAC" => {
                            cur.pos += 1;
                            perf.wfrac = cur.number("well fraction")?;
                        }
                        "WG" => {
                            cur.pos += 1;
                            perf.wg = cur.number("geometric factor")?;
                        }
                        "RADIUS" => {
                            cur.pos += 1;
                            let (_, which) = cur.expect_word("CIRCLE or PEACEMAN")?;
                            perf.radius_peaceman = match which.as_str() {
                                "CIRCLE" => false,
                                "PEACEMAN" => true,
                                other => return Err(cur.err(format!("RADIUS expects CIRCLE or PEACEMAN, found '{other}'"))),
                            };
                        }
                        "DIR" => {
                            cur.pos += 1;
                            let (_, which) = cur.expect_word("X, Y or Z")?;
                            perf.direction = match which.as_str() {
                                "X" => Axis::X,
                                "Y" => Axis::Y,
                                "Z" => Axis::Z,
                                other => return Err(cur.err(format!("DIR expects X, Y or Z, found '{other}'"))),
                            };
                        }
                        _ => break,
                    }
                }
                if perf.wi.is_none() {
                    if perf.kh.is_none() {
                        return Err(cur.err(format!("well '{name}': PERF needs WI or KH (use KH AUTO for k*dz)")));
                    }
                    if perf.rw.is_none() {
                        return Err(cur.err(format!("well '{name}': PERF needs RW when WI is absent")));
                    }
                }
                perfs.push(perf);
            }
            "RATE_MAX" => rate_max = Some(cur.number("rate limit")?),
            "BHP_MIN" => {
                if kind != WellKind::Producer {
                    return Err(cur.err(format!("well '{name}': BHP_MIN applies to producers")));
                }
                bhp_limit = Some(cur.number("BHP floor")?);
            }
            "BHP_MAX" => {
                if kind != WellKind::Injector {
                    return Err(cur.err(format!("well '{name}': BHP_MAX applies to injectors")));
                }
                bhp_limit = Some(cur.number("BHP ceiling")?);
            }
            "REF_DEPTH" => ref_depth = Some(cur.number("reference depth")?),
            "MODE" => {
                let (_, which) = cur.expect_word("RATE or BHP")?;
                mode = match which.as_str() {
                    "RATE" => ControlMode::Rate,
                    "BHP" => ControlMode::Bhp,
                    other => return Err(cur.err(format!("MODE expects RATE or BHP, found '{other}'"))),
                };
            }
            other => return Err(cur.err(format!("unknown WELL keyword '{other}'"))),
        }
    }
    Ok(WellSection { name, kind, perfs, rate_max, bhp_limit, ref_depth, mode })
}

fn parse_schedule<S: Scalar>(cur: &mut Cursor) -> Result<ScheduleSection<S>, DeckError> {
    let mut t_stop = None;
    let mut report_interval = None;
    let mut changes = Vec::new();
    loop {
        let (_, kw) = cur.expect_word("SCHEDULE keyword or END")?;
        match kw.as_str() {
            "END" => break,
            "TSTOP" => t_stop = Some(cur.number::<S>("stop time")?),
            "REPORT" => report_interval = Some(cur.number::<S>("report interval")?),
            "AT" => {
                let time = cur.number::<S>("schedule time")?;
                cur.expect_keyword("WELL")?;
                let (well, _) = cur.expect_word("well name")?;
                let (_, what) = cur.expect_word("RATE_MAX, BHP_MIN or BHP_MAX")?;
                let action = match what.as_str() {
                    "RATE_MAX" => WellAction::SetRateMax(cur.number("rate limit")?),
                    "BHP_MIN" | "BHP_MAX" => WellAction::SetBhpLimit(cur.number("BHP limit")?),
                    other => return Err(cur.err(format!("unknown schedule action '{other}'"))),
                };
                changes.push(ScheduleChange { time, well, action });
            }
            other => return Err(cur.err(format!("unknown SCHEDULE keyword '{other}'"))),
        }
    }
    Ok(ScheduleSection {
        t_stop: t_stop.ok_or_else(|| cur.err("SCHEDULE is missing TSTOP"))?,
        report_interval,
        changes,
    })
}

fn parse_solver<S: Scalar>(cur: &mut Cursor, out: &mut SolverSection<S>) -> Result<(), DeckError> {
    loop {
        let (_, kw) = cur.expect_word("SOLVER keyword or END")?;
        match kw.as_str() {
            "END" => break,
            "EPSILON" => out.epsilon = Some(cur.number("tolerance")?),
            "MAX_NEWTON" => out.max_newton = Some(cur.integer("max Newton iterations")?),
            "FORCING" => {
                let (_, which) = cur.expect_word("EW1, EW2, EW3 or CONST")?;
                out.forcing = Some(match which.as_str() {
                    "EW1" => ForcingSpec::Ew1,
                    "EW2" => ForcingSpec::Ew2,
                    "EW3" => {
                        let gamma = cur.number("gamma")?;
                        let beta = cur.number("beta")?;
                        ForcingSpec::Ew3 { gamma, beta }
                    }
                    "CONST" => ForcingSpec::Constant(cur.number("constant eta")?),
                    other => return Err(cur.err(format!("unknown forcing rule '{other}'"))),
                });
            }
            "GMRES_RESTART" => out.gmres_restart = Some(cur.integer("restart length")?),
            "GMRES_MAXITER" => out.gmres_max_iter = Some(cur.integer("max linear iterations")?),
            "PRECOND" => {
                let (_, which) = cur.expect_word("CPR, ILU0 or NONE")?;
                out.precond = Some(match which.as_str() {
                    "CPR" => PrecondSpec::Cpr,
                    "ILU0" => PrecondSpec::Ilu0,
                    "NONE" => PrecondSpec::None,
                    other => return Err(cur.err(format!("unknown preconditioner '{other}'"))),
                });
            }
            "PRESSURE_SET" => {
                let mut set = Vec::new();
                while let Some(next) = cur.peek_upper() {
                    match next {
                        "PF" => {
                            set.push(0);
                            cur.pos += 1;
                        }
                        "PM" => {
                            set.push(2);
                            cur.pos += 1;
                        }
                        _ => break,
                    }
                }
                if set.is_empty() {
                    return Err(cur.err("PRESSURE_SET needs PF and/or PM"));
                }
                set.sort_unstable();
                set.dedup();
                out.pressure_set = Some(set);
            }
            "DT_INIT" => out.dt_init = Some(cur.number("initial step")?),
            "DT_MIN" => out.dt_min = Some(cur.number("minimum step")?),
            "DT_MAX" => out.dt_max = Some(cur.number("maximum step")?),
            "DT_GROW" => out.dt_grow = Some(cur.number("growth factor")?),
            "DT_CUT" => out.dt_cut = Some(cur.number("cut factor")?),
            "MAX_CUTS" => out.max_cuts = Some(cur.integer("max consecutive cuts")?),
            "RESIDUAL_SCALING" => {
                let (_, which) = cur.expect_word("ON or OFF")?;
                out.residual_scaling = Some(match which.as_str() {
                    "ON" => true,
                    "OFF" => false,
                    other => return Err(cur.err(format!("RESIDUAL_SCALING expects ON or OFF, found '{other}'"))),
                });
            }
            "PARTITIONS" => out.partitions = Some(cur.integer("partition count")?),
            "MAX_DP" => out.max_dp = Some(cur.number("pressure damping")?),
            "MAX_DS" => out.max_ds = Some(cur.number("saturation damping")?),
            other => return Err(cur.err(format!("unknown SOLVER keyword '{other}'"))),
        }
    }
    Ok(())
}

fn parse_init<S: Scalar>(cur: &mut Cursor) -> Result<InitSection<S>, DeckError> {
    let mut p_f = None;
    let mut p_m = None;
    let mut s_wf = None;
    let mut s_wm = None;
    loop {
        let (_, kw) = cur.expect_word("INIT keyword or END")?;
        match kw.as_str() {
            "END" => break,
            "PF" => p_f = Some(cur.number("initial fracture pressure")?),
            "PM" => p_m = Some(cur.number("initial matrix pressure")?),
            "SWF" => s_wf = Some(cur.number("initial fracture water saturation")?),
            "SWM" => s_wm = Some(cur.number("initial matrix water saturation")?),
            other => return Err(cur.err(format!("unknown INIT keyword '{other}'"))),
        }
    }
    Ok(InitSection {
        p_f: p_f.ok_or_else(|| cur.err("INIT is missing PF"))?,
        p_m: p_m.ok_or_else(|| cur.err("INIT is missing PM"))?,
        s_wf: s_wf.ok_or_else(|| cur.err("INIT is missing SWF"))?,
        s_wm: s_wm.ok_or_else(|| cur.err("INIT is missing SWM"))?,
    })
}

fn validate<S: Scalar>(deck: &SimDeck<S>, cur: &Cursor) -> Result<(), DeckError> {
    let err = |msg: String| DeckError { file: cur.file.clone(), line: 0, col: 0, message: msg };
    let g = &deck.grid;
    for (axis, sizes, n) in [("DX", &g.dx, g.nx), ("DY", &g.dy, g.ny), ("DZ", &g.dz, g.nz)] {
        let v = sizes.expand(n);
        if v.len() != n {
            return Err(err(format!("{axis} has {} entries, expected {n}", v.len())));
        }
        if v.iter().any(|x| !(*x > S::zero())) {
            return Err(err(format!("{axis} entries must be positive")));
        }
    }
    if !(deck.schedule.t_stop > S::zero()) {
        return Err(err("total simulated time must be positive".into()));
    }
    let mut prev = S::zero();
    for ch in &deck.schedule.changes {
        if !(ch.time > prev) {
            return Err(err("schedule times must be strictly increasing".into()));
        }
        prev = ch.time;
        if !deck.wells.iter().any(|w| w.name == ch.well) {
            return Err(err(format!("schedule references unknown well '{}'", ch.well)));
        }
    }
    for w in &deck.wells {
        if w.perfs.is_empty() {
            return Err(err(format!("well '{}' has no perforations", w.name)));
        }
        for p in &w.perfs {
            if p.i > g.nx || p.j > g.ny || p.k > g.nz {
                return Err(err(format!(
                    "well '{}' perforation [{} {} {}] outside the {}x{}x{} grid",
                    w.name, p.i, p.j, p.k, g.nx, g.ny, g.nz
                )));
            }
        }
        if w.rate_max.is_none() && w.mode == ControlMode::Rate {
            return Err(err(format!("well '{}' operates on rate but has no RATE_MAX", w.name)));
        }
        if w.bhp_limit.is_none() && w.mode == ControlMode::Bhp {
            return Err(err(format!("well '{}' operates on BHP but has no BHP limit", w.name)));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINI: &str = r#"
TITLE mini deck
GRID
  DIMENS 2 1 1
  DX 100.0
  DY 100.0
  DZ 50.0
  TOPS 2000.0 CENTER
END
MATRIX
  PERMX 100.0  PERMY 100.0  PERMZ 10.0
  PORO 0.1392  CROCK 3.0e-6  PREF 15.0
END
FRACTURE
  PERMX 395.85  PERMY 395.85  PERMZ 395.85
  PORO 0.039585  CROCK 3.0e-6  PREF 15.0
  SHAPE KAZEMI
END
PVT
  OIL   15.0 1.036 1.313e-5 40.0 58.0
  WATER 15.0 1.0   3.0e-6   0.5  62.4
END
SATFUNC MATRIX
  COREY 0.08 0.2 0.6 1.0 2.0 2.0 21
END
SATFUNC FRACTURE
  COREY 0.0 0.0 1.0 1.0 2.0 2.0 21
END
WELL P1 PRODUCER
  PERF 1 1 1 WI 200.0
  RATE_MAX 300.0
  BHP_MIN 15.0
END
SCHEDULE
  TSTOP 10.0
END
INIT
  PF 1980.0  PM 2000.0  SWF 0.01  SWM 0.08
END
"#;

    #[test]
    fn parses_minimal_deck() {
        let deck: SimDeck<f64> = parse_deck_str(MINI, "mini.deck").unwrap();
        assert_eq!(deck.title, "mini deck");
        assert_eq!((deck.grid.nx, deck.grid.ny, deck.grid.nz), (2, 1, 1));
        assert!(deck.grid.tops_is_center);
        assert_eq!(deck.wells.len(), 1);
        assert_eq!(deck.wells[0].kind, WellKind::Producer);
        assert_eq!(deck.wells[0].perfs[0].wi, Some(200.0));
        assert_eq!(deck.schedule.t_stop, 10.0);
        assert_eq!(deck.init.p_m, 2000.0);
    }

    #[test]
    fn empty_deck_reports_missing_grid() {
        let e = parse_deck_str::<f64>("", "empty.deck").unwrap_err();
        assert!(e.message.contains("missing GRID section"), "{e}");
    }

    #[test]
    fn zero_dimension_errors_at_dimens() {
        let text = MINI.replace("DIMENS 2 1 1", "DIMENS 0 1 1");
        let e = parse_deck_str::<f64>(&text, "bad.deck").unwrap_err();
        assert!(e.message.contains("DIMENS"), "{e}");
        assert!(e.line > 0);
    }

    #[test]
    fn unknown_keyword_is_located() {
        let text = MINI.replace("TSTOP 10.0", "TSTOP 10.0\n  BOGUS 1.0");
        let e = parse_deck_str::<f64>(&text, "bad.deck").unwrap_err();
        assert!(e.message.contains("BOGUS"), "{e}");
    }

    #[test]
    fn repeat_syntax_expands() {
        let text = MINI.replace("DX 100.0", "DX 2*100.0");
        let deck: SimDeck<f64> = parse_deck_str(&text, "mini.deck").unwrap();
        assert_eq!(deck.grid.dx.expand(2), vec![100.0, 100.0]);
    }

    #[test]
    fn geometry_perforation_requires_rw() {
        let text = MINI.replace("PERF 1 1 1 WI 200.0", "PERF 1 1 1 KH AUTO");
        let e = parse_deck_str::<f64>(&text, "bad.deck").unwrap_err();
        assert!(e.message.contains("RW"), "{e}");
    }

    #[test]
    fn schedule_must_increase() {
        let text = MINI.replace(
            "TSTOP 10.0",
            "TSTOP 10.0\n  AT 5.0 WELL P1 RATE_MAX 100.0\n  AT 3.0 WELL P1 RATE_MAX 50.0",
        );
        let e = parse_deck_str::<f64>(&text, "bad.deck").unwrap_err();
        assert!(e.message.contains("strictly increasing"), "{e}");
    }
}
