//! The verbs.

use std::collections::BTreeMap;
use std::path::Path;

use lamb_strip::cross_section::{assemble_forms, build_grid, CrossSectionGrid, FormMatrices};
use lamb_strip::halfstrip_solver::{DirichletData, HalfStripSolver, TruncatedDomain};
use lamb_strip::linalg::{CVec, C64};
use lamb_strip::modes_flux::{
    build_canonical_basis, classify_wave, make_wave, symplectic_pairing, verify_chain_biorthogonality, Field,
    ModalBasis, SymplecticGram, WaveClass, WaveKind,
};
use lamb_strip::pencil_spectrum::{
    compute_adjoint_chains, default_window, keldysh_residual, lamb_determinant, resolvent_residue_check,
    sh_reference_spectrum, solve_qep, spectral_gap, validate_window, Branch, ModeSet, SpectralWindow,
};
use lamb_strip::strip_solver::{
    asymptotic_coefficients, load_from_function, modes_between, verify_strip_asymptotics, AxialBump, Partition,
    SeparableSource, SourceTerm,
};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{RunConfig, StripSourceSpec};
use crate::output::*;
use crate::CliError;

pub struct Context {
    pub cfg: RunConfig,
    pub out: std::path::PathBuf,
    pub tolerance_scale: f64,
}

/// Everything computed at one frequency.
pub struct Analysis {
    pub omega: f64,
    pub problem: lamb_strip::Config,
    pub grid: CrossSectionGrid<f64>,
    pub forms: FormMatrices<f64>,
    pub window: SpectralWindow,
    pub modes: ModeSet,
}

pub fn analyze(cfg: &RunConfig, omega: f64) -> Result<Analysis, CliError> {
    let problem = cfg.problem(omega);
    let d = &cfg.discretization;
    let grid = build_grid(&problem, d.n_elems, d.order)?;
    let forms = assemble_forms(&problem, &grid);
    let mut window = default_window(&forms, cfg.window.delta)?;
    if let Some(tol) = cfg.window.axis_tolerance {
        window.axis_tolerance = tol;
    }
    validate_window(&forms, &window)?;
    let modes = compute_adjoint_chains(&forms, &solve_qep(&forms, &window)?)?;
    Ok(Analysis { omega, problem, grid, forms, window, modes })
}

fn is_cutoff(a: &Analysis) -> bool {
    a.modes.propagating().any(|m| m.algebraic_multiplicity() > m.geometric_multiplicity())
}

fn profile(grid: &CrossSectionGrid<f64>, v: &CVec) -> Vec<ProfileSample> {
    let n = grid.dof_per_component();
    grid.nodes
        .iter()
        .enumerate()
        .map(|(a, &x1)| ProfileSample { x1, u: [pair(v[a]), pair(v[n + a]), pair(v[2 * n + a])] })
        .collect()
}

fn class_name(c: WaveClass) -> &'static str {
    match c {
        WaveClass::Outgoing => "outgoing",
        WaveClass::Incoming => "incoming",
        WaveClass::NullFlux => "null-flux",
    }
}

fn mode_records(a: &Analysis) -> Result<Vec<ModeRecord>, CliError> {
    let mut out = Vec::new();
    for (i, m) in a.modes.modes.iter().enumerate() {
        let head = make_wave(&a.modes, i, 0, 0, WaveKind::Direct)?;
        let flux = (C64::new(0.0, 1.0) * symplectic_pairing(&a.forms, &head, &head, 0.0)).re;
        let classification = if m.propagating {
            class_name(classify_wave(&a.forms, &head, 0.0)).to_string()
        } else if m.nu.re < 0.0 {
            "decaying".to_string()
        } else {
            "growing".to_string()
        };
        out.push(ModeRecord {
            omega: a.omega,
            nu: pair(m.nu),
            branch: m.branch.name().to_string(),
            partial_multiplicities: m.partial_multiplicities(),
            algebraic_multiplicity: m.algebraic_multiplicity(),
            classification,
            flux,
            profile: profile(&a.grid, &m.chains[0].vectors[0]),
        });
    }
    Ok(out)
}

/// Analyses for all sweep points, computed concurrently and returned in sweep order.
fn sweep(cfg: &RunConfig) -> Vec<(f64, Result<Analysis, CliError>)> {
    cfg.omegas().into_par_iter().map(|w| (w, analyze(cfg, w))).collect()
}

pub fn cmd_modes(ctx: &Context) -> Result<(), CliError> {
    let mut frequencies = Vec::new();
    for (_, res) in sweep(&ctx.cfg) {
        let a = res?;
        frequencies.push(FrequencyModes { omega: a.omega, window_delta: a.window.delta, records: mode_records(&a)? });
    }
    let doc = ModesDocument { frequencies };
    write_json(&ctx.out, "modes.json", &doc)?;
    for f in &doc.frequencies {
        let count = |c: &str| f.records.iter().filter(|r| r.classification == c).count();
        println!(
            "omega {:.6}: {} modes in window (delta {:.6}), {} outgoing, {} incoming, {} null-flux",
            f.omega,
            f.records.len(),
            f.window_delta,
            count("outgoing"),
            count("incoming"),
            count("null-flux")
        );
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct DispersionRow {
    omega: f64,
    branch: String,
    track: String,
    nu_re: Option<f64>,
    nu_im: Option<f64>,
    multiplicity: Option<usize>,
    classification: String,
    flag: String,
}

#[derive(Debug, Serialize)]
struct CurvePoint {
    curve: String,
    x: f64,
    y: f64,
}

/// Mass-weighted overlap of two normalized section profiles.
fn overlap(forms: &FormMatrices<f64>, u: &CVec, v: &CVec) -> f64 {
    let uv = v.dotc(&(&forms.mass * u)).norm();
    let uu = u.dotc(&(&forms.mass * u)).re;
    let vv = v.dotc(&(&forms.mass * v)).re;
    uv / (uu * vv).sqrt()
}

pub fn cmd_dispersion(ctx: &Context) -> Result<(), CliError> {
    let mut rows = Vec::new();
    let mut curves = Vec::new();
    // last profile of each track, keyed by (branch, sign of Im nu)
    let mut tracks: BTreeMap<(String, i8), Vec<(String, CVec)>> = BTreeMap::new();
    let mut next_id: BTreeMap<String, usize> = BTreeMap::new();
    let mut previous_forms: Option<FormMatrices<f64>> = None;
    for (omega, res) in sweep(&ctx.cfg) {
        let a = match res {
            Ok(a) => a,
            Err(e) => {
                rows.push(DispersionRow {
                    omega,
                    branch: String::new(),
                    track: String::new(),
                    nu_re: None,
                    nu_im: None,
                    multiplicity: None,
                    classification: String::new(),
                    flag: format!("{}: {}", e.kind(), e.message()),
                });
                continue;
            }
        };
        let cutoff = is_cutoff(&a);
        let records = mode_records(&a)?;
        let mut new_tracks: BTreeMap<(String, i8), Vec<(String, CVec)>> = BTreeMap::new();
        for (m, r) in a.modes.modes.iter().zip(&records).filter(|(m, _)| m.propagating) {
            let sign = if m.nu.im > 0.0 { 1 } else if m.nu.im < 0.0 { -1 } else { 0 };
            let key = (r.branch.clone(), sign);
            let head = &m.chains[0].vectors[0];
            let forms = previous_forms.as_ref().unwrap_or(&a.forms);
            let prev = tracks.entry(key.clone()).or_default();
            let best = prev
                .iter()
                .enumerate()
                .map(|(k, (_, v))| (k, overlap(forms, head, v)))
                .filter(|(_, o)| *o > 0.5)
                .max_by(|x, y| x.1.total_cmp(&y.1));
            let id = match best {
                Some((k, _)) => prev.remove(k).0,
                None => {
                    let n = next_id.entry(r.branch.clone()).or_insert(0);
                    *n += 1;
                    format!("{}-{}", r.branch, *n - 1)
                }
            };
            new_tracks.entry(key).or_default().push((id.clone(), head.clone()));
            if m.nu.im >= 0.0 {
                curves.push(CurvePoint { curve: id.clone(), x: omega, y: m.nu.im });
            }
            rows.push(DispersionRow {
                omega,
                branch: r.branch.clone(),
                track: id,
                nu_re: Some(m.nu.re),
                nu_im: Some(m.nu.im),
                multiplicity: Some(r.algebraic_multiplicity),
                classification: r.classification.clone(),
                flag: if cutoff { "cutoff".into() } else { String::new() },
            });
        }
        tracks = new_tracks;
        previous_forms = Some(a.forms);
    }
    write_csv(&ctx.out, "dispersion.csv", &rows)?;
    write_csv(&ctx.out, "dispersion_curves.csv", &curves)?;
    println!("{} dispersion rows written", rows.len());
    Ok(())
}

fn canonical_basis(a: &Analysis) -> Result<ModalBasis, CliError> {
    Ok(build_canonical_basis(&a.forms, &SymplecticGram::build(&a.forms, &a.modes)?)?)
}

fn domain(cfg: &RunConfig) -> Result<TruncatedDomain, CliError> {
    let d = &cfg.discretization;
    Ok(TruncatedDomain::new(d.length, d.element_length, d.order, d.n_evanescent)?)
}

fn basis_modes(b: &ModalBasis) -> Vec<BasisMode> {
    b.modes
        .iter()
        .enumerate()
        .map(|(k, u)| BasisMode {
            index: k,
            direction: if k < b.t { "outgoing".into() } else { "incoming".into() },
            branch: u.branch().map(Branch::name).unwrap_or("mixed").to_string(),
            nu: u.terms.iter().map(|(_, w)| pair(w.nu)).collect(),
            flux: b.flux[k],
        })
        .collect()
}

pub fn cmd_scatter(ctx: &Context) -> Result<(), CliError> {
    let a = analyze(&ctx.cfg, ctx.cfg.omega())?;
    let basis = canonical_basis(&a)?;
    // window validation failures, the cutoff included, are numerical failures for this verb
    let hs = HalfStripSolver::new(&a.forms, &basis, &a.window, &domain(&ctx.cfg)?).map_err(|e| match e.into() {
        CliError::Assumption(m) => CliError::Numerical(format!("Assumption violation: {m}")),
        other => other,
    })?;
    let sm = hs.scattering_matrix()?;
    let tol = 1e-6 * ctx.tolerance_scale;
    let doc = ScatteringDocument {
        omega: a.omega,
        t: basis.t,
        modes: basis_modes(&basis),
        s: (0..basis.t).map(|i| (0..basis.t).map(|k| pair(sm.s[(i, k)])).collect()).collect(),
        unitarity_residual: sm.unitarity_residual,
        reciprocity_defect: sm.reciprocity_defect,
        unitarity_tolerance: tol,
        unitarity_ok: sm.unitarity_residual <= tol,
    };
    write_json(&ctx.out, "scattering.json", &doc)?;
    println!("T = {}, |SS* - I| = {:.3e}", basis.t, sm.unitarity_residual);
    if !doc.unitarity_ok {
        return Err(CliError::Numerical(format!(
            "scattering unitarity residual {:.3e} exceeds {tol:.1e}",
            sm.unitarity_residual
        )));
    }
    Ok(())
}

/// Dirichlet trace from a CSV file: x1 then u1, u2, u3 (real) or their (re, im) pairs.
pub fn read_g_file(path: &Path, grid: &CrossSectionGrid<f64>) -> Result<CVec, CliError> {
    let bad = |m: String| CliError::Config(format!("g-file {}: {m}", path.display()));
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| bad(e.to_string()))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        let vals: Result<Vec<f64>, _> = rec.iter().map(str::parse::<f64>).collect();
        match vals {
            Ok(v) => rows.push(v),
            Err(_) if k == 0 => continue,
            Err(e) => return Err(bad(format!("row {}: {e}", k + 1))),
        }
    }
    let n = grid.dof_per_component();
    if rows.len() != n {
        return Err(bad(format!("{} data rows, the section has {n} nodes", rows.len())));
    }
    let mut g = CVec::zeros(3 * n);
    for (a, row) in rows.iter().enumerate() {
        if (row[0] - grid.nodes[a]).abs() > 1e-8 * (1.0 + grid.nodes[a].abs()) {
            return Err(bad(format!("row {} has x1 = {}, expected node {}", a + 1, row[0], grid.nodes[a])));
        }
        for comp in 0..3 {
            g[comp * n + a] = match row.len() {
                4 => C64::new(row[1 + comp], 0.0),
                7 => C64::new(row[1 + 2 * comp], row[2 + 2 * comp]),
                w => return Err(bad(format!("row {} has {w} columns, expected 4 or 7", a + 1))),
            };
        }
    }
    Ok(g)
}

pub fn cmd_halfstrip(ctx: &Context) -> Result<(), CliError> {
    let g_path = ctx
        .cfg
        .halfstrip
        .g_file
        .as_ref()
        .ok_or_else(|| CliError::Config("halfstrip.g_file is required for the halfstrip verb".into()))?;
    let g_path = ctx.cfg.resolve(g_path);
    let a = analyze(&ctx.cfg, ctx.cfg.omega())?;
    let g = read_g_file(&g_path, &a.grid)?;
    let basis = canonical_basis(&a)?;
    let dom = domain(&ctx.cfg)?;
    let hs = HalfStripSolver::new(&a.forms, &basis, &a.window, &dom)?;
    let sol = hs.solve(&DirichletData { g });
    let samples = ctx.cfg.halfstrip.samples.then(|| {
        (0..=dom.length.floor() as usize)
            .map(|k| {
                let x3 = k as f64;
                FieldSection { x3, values: profile(&a.grid, &sol.field.value(x3)) }
            })
            .collect()
    });
    let doc = HalfStripDocument {
        omega: a.omega,
        length: dom.length,
        amplitudes: basis
            .outgoing()
            .iter()
            .zip(&sol.amplitudes)
            .enumerate()
            .map(|(k, (u, amp))| Amplitude {
                index: k,
                branch: u.branch().map(Branch::name).unwrap_or("mixed").to_string(),
                nu: pair(u.terms[0].1.nu),
                a: pair(*amp),
            })
            .collect(),
        decay: DecayDocument {
            slab_starts: sol.decay.slab_starts.clone(),
            slab_norms: sol.decay.slab_norms.clone(),
            slope: sol.decay.slope,
            gap: spectral_gap(&a.forms)?,
        },
        residual: sol.residual,
        samples,
    };
    write_json(&ctx.out, "halfstrip.json", &doc)?;
    for am in &doc.amplitudes {
        println!("a_{} ({}) = {:+.10e} {:+.10e}i", am.index, am.branch, am.a[0], am.a[1]);
    }
    println!("remainder slope {:.4} (gap {:.4})", doc.decay.slope, doc.decay.gap);
    Ok(())
}

fn default_sources() -> Vec<StripSourceSpec> {
    vec![StripSourceSpec { center: 0.0, half_width: 1.0, q: 8, profile: [vec![1.0, 1.0], vec![1.0], vec![0.0, 0.0, 1.0]] }]
}

fn build_source(grid: &CrossSectionGrid<f64>, specs: &[StripSourceSpec]) -> SeparableSource {
    let poly = |c: &[f64], x: f64| c.iter().rev().fold(0.0, |acc, &k| acc * x + k);
    SeparableSource::new(
        specs
            .iter()
            .map(|s| SourceTerm {
                load: load_from_function(grid, |x| {
                    [C64::new(poly(&s.profile[0], x), 0.0), C64::new(poly(&s.profile[1], x), 0.0), C64::new(poly(&s.profile[2], x), 0.0)]
                }),
                axial: AxialBump::new(s.center, s.half_width, s.q),
            })
            .collect(),
    )
}

fn strip_check(a: &Analysis, cfg: &RunConfig, tol: f64) -> Result<StripDocument, CliError> {
    let specs = if cfg.strip.sources.is_empty() { default_sources() } else { cfg.strip.sources.clone() };
    let src = build_source(&a.grid, &specs);
    let beta = cfg.strip.beta.unwrap_or(-a.window.delta / 2.0);
    let gamma = cfg.strip.gamma.unwrap_or(a.window.delta / 2.0);
    let rep = verify_strip_asymptotics(&a.forms, &src, beta, gamma, &a.modes)?;
    let idx = modes_between(&a.modes, beta, gamma);
    let c1 = asymptotic_coefficients(&src, &a.modes, &idx, Partition::default())?;
    let c2 = asymptotic_coefficients(&src, &a.modes, &idx, Partition { a: -0.5, b: 0.25 })?;
    let scale = c1.iter().flatten().flatten().map(|z| z.norm()).fold(f64::MIN_POSITIVE, f64::max);
    let part = c1
        .iter()
        .flatten()
        .flatten()
        .zip(c2.iter().flatten().flatten())
        .map(|(x, y)| (x - y).norm() / scale)
        .fold(0.0, f64::max);
    Ok(StripDocument {
        omega: a.omega,
        beta,
        gamma,
        residual: rep.residual,
        partition_dependence: part,
        tolerance: tol,
        ok: rep.residual <= tol && part <= 1e-10 * (tol / 1e-5),
    })
}

pub fn cmd_strip_verify(ctx: &Context) -> Result<(), CliError> {
    let a = analyze(&ctx.cfg, ctx.cfg.omega())?;
    let doc = strip_check(&a, &ctx.cfg, 1e-5 * ctx.tolerance_scale)?;
    write_json(&ctx.out, "strip.json", &doc)?;
    println!("strip residual {:.3e}, partition dependence {:.1e}", doc.residual, doc.partition_dependence);
    if !doc.ok {
        return Err(CliError::Numerical(format!(
            "strip asymptotics residual {:.3e} exceeds {:.1e}",
            doc.residual, doc.tolerance
        )));
    }
    Ok(())
}

struct Checks {
    scale: f64,
    list: Vec<CheckRecord>,
}

impl Checks {
    fn value(&mut self, name: &str, value: f64, tol: f64, detail: String) {
        let tol = tol * self.scale;
        self.list.push(CheckRecord {
            name: name.into(),
            value: Some(value),
            tolerance: Some(tol),
            status: if value <= tol { "pass".into() } else { "fail".into() },
            detail,
        });
    }

    fn flag(&mut self, name: &str, ok: bool, detail: String) {
        self.list.push(CheckRecord {
            name: name.into(),
            value: None,
            tolerance: None,
            status: if ok { "pass".into() } else { "fail".into() },
            detail,
        });
    }

    fn skip(&mut self, name: &str, detail: &str) {
        self.list.push(CheckRecord {
            name: name.into(),
            value: None,
            tolerance: None,
            status: "skipped".into(),
            detail: detail.into(),
        });
    }

    fn error(&mut self, name: &str, e: CliError) {
        self.list.push(CheckRecord {
            name: name.into(),
            value: None,
            tolerance: None,
            status: "fail".into(),
            detail: e.to_string(),
        });
    }
}

fn spectral_checks(a: &Analysis, c: &mut Checks) -> Result<(), CliError> {
    let reference = sh_reference_spectrum(&a.problem, &a.window);
    let sh: Vec<C64> = a.modes.modes.iter().filter(|m| m.branch == Branch::Sh).map(|m| m.nu).collect();
    let mut worst: f64 = 0.0;
    for (nu, _) in &reference {
        worst = worst.max(sh.iter().map(|z| (z - nu).norm()).fold(f64::INFINITY, f64::min));
    }
    c.value("sh-closed-form", worst, 1e-8, format!("{} SH eigenvalues in the window", reference.len()));

    let mut sign_ok = true;
    for m in a.modes.propagating().filter(|m| m.branch == Branch::InPlane && m.nu.im > 0.0 && m.algebraic_multiplicity() == 1) {
        let k = m.nu.im;
        let eps = 1e-6 * k;
        let lo = lamb_determinant(&a.problem, C64::new(0.0, k - eps))?.re;
        let hi = lamb_determinant(&a.problem, C64::new(0.0, k + eps))?.re;
        sign_ok &= (lo > 0.0) != (hi > 0.0);
    }
    c.flag("lamb-determinant-bracket", sign_ok, "determinant changes sign across every in-plane axis wavenumber".into());

    let chain = a.modes.modes.iter().flat_map(|m| m.chains.iter().map(|ch| ch.residual(&a.forms))).fold(0.0, f64::max);
    c.value("jordan-chain-residual", chain, 1e-10, String::new());
    let keld = a.modes.modes.iter().map(|m| keldysh_residual(&a.forms, m)).fold(0.0, f64::max);
    c.value("keldysh-biorthogonality", keld, 1e-8, String::new());

    let nus = a.modes.eigenvalues();
    if let Some(m) = a.modes.propagating().next() {
        let dist = nus.iter().filter(|z| (*z - m.nu).norm() > 1e-9).map(|z| (z - m.nu).norm()).fold(f64::INFINITY, f64::min);
        let radius = (dist / 3.0).min(0.2);
        match resolvent_residue_check(&a.forms, &a.modes, m.nu, radius) {
            Ok(r) => c.value("resolvent-residue", r, 1e-6, format!("around nu = {:.6}", m.nu)),
            Err(e) => c.error("resolvent-residue", e.into()),
        }
    }

    let gram = SymplecticGram::build(&a.forms, &a.modes)?;
    let qn = gram.q.norm().max(f64::MIN_POSITIVE);
    c.value("q-antihermitian", gram.antihermitian_defect() / qn, 1e-12, String::new());
    let mut rind: f64 = 0.0;
    for u in &gram.waves {
        for v in &gram.waves {
            let q0 = symplectic_pairing(&a.forms, u, v, 2.0);
            let q1 = symplectic_pairing(&a.forms, u, v, 5.0);
            rind = rind.max((q0 - q1).norm() / (1.0 + q0.norm()));
        }
    }
    c.value("q-section-independence", rind, 1e-12, String::new());
    c.value("chain-q-pattern", verify_chain_biorthogonality(&a.forms, &a.modes)?, 1e-8, String::new());
    let (p, n) = gram.signature();
    c.flag("flux-signature", p == n && gram.kappa() == 2 * p, format!("signature ({p}, {n}), kappa {}", gram.kappa()));
    match build_canonical_basis(&a.forms, &gram) {
        Ok(b) => c.value("canonical-basis-pattern", b.orthogonality_defect(&a.forms), 1e-8, format!("T = {}", b.t)),
        Err(e) => c.error("canonical-basis-pattern", e.into()),
    }
    Ok(())
}

fn halfstrip_checks(a: &Analysis, cfg: &RunConfig, c: &mut Checks) -> Result<(), CliError> {
    const NAMES: [&str; 4] = ["halfstrip-reproduction", "scattering-unitarity", "green-coefficient-formula", "remainder-decay"];
    if is_cutoff(a) {
        for n in NAMES {
            c.skip(n, "cutoff frequency: the half-strip problem is not posed");
        }
        return Ok(());
    }
    let basis = canonical_basis(a)?;
    let hs = HalfStripSolver::new(&a.forms, &basis, &a.window, &domain(cfg)?)?;
    let mut rep: f64 = 0.0;
    for (k, u) in basis.outgoing().iter().enumerate() {
        let sol = hs.solve(&DirichletData { g: u.value(0.0) });
        for (j, amp) in sol.amplitudes.iter().enumerate() {
            rep = rep.max((amp - if j == k { 1.0 } else { 0.0 }).norm());
        }
    }
    c.value(NAMES[0], rep, 1e-6, "outgoing traces continued with unit amplitude".into());
    let sm = hs.scattering_matrix()?;
    c.value(NAMES[1], sm.unitarity_residual, 1e-6, format!("reciprocity defect {:.2e} (diagnostic)", sm.reciprocity_defect));
    let n = a.grid.dof_per_component();
    let mut g = CVec::zeros(3 * n);
    for (k, &x) in a.grid.nodes.iter().enumerate() {
        g[k] = C64::new(1.0 + 0.3 * x, 0.2);
        g[n + k] = C64::new((1.3 * x).cos(), 0.0);
        g[2 * n + k] = C64::new(0.5 * x * x, -0.4 * x);
    }
    let zetas = hs.zeta_fields()?;
    c.value(NAMES[2], hs.coefficient_crosscheck(&DirichletData { g: g.clone() }, &zetas).0, 1e-5, String::new());
    let gap = spectral_gap(&a.forms)?;
    let slope = hs.solve(&DirichletData { g }).decay.slope;
    c.value(NAMES[3], (slope + gap).abs() / gap, 0.1, format!("slope {slope:.4} vs gap {gap:.4}"));
    Ok(())
}

pub fn cmd_selfcheck(ctx: &Context) -> Result<(), CliError> {
    let a = analyze(&ctx.cfg, ctx.cfg.omega())?;
    let mut checks = Checks { scale: ctx.tolerance_scale, list: Vec::new() };
    if let Err(e) = spectral_checks(&a, &mut checks) {
        checks.error("spectral-suite", e);
    }
    if let Err(e) = halfstrip_checks(&a, &ctx.cfg, &mut checks) {
        checks.error("halfstrip-suite", e);
    }
    if ctx.cfg.selfcheck.strip {
        match strip_check(&a, &ctx.cfg, 1e-5 * ctx.tolerance_scale) {
            Ok(d) => checks.value("strip-asymptotics", d.residual, 1e-5, format!("partition dependence {:.1e}", d.partition_dependence)),
            Err(e) => checks.error("strip-asymptotics", e),
        }
    } else {
        checks.skip("strip-asymptotics", "disabled in the config");
    }
    let passed = checks.list.iter().all(|r| r.status != "fail");
    for r in &checks.list {
        let v = r.value.map(|v| format!("{v:.3e}")).unwrap_or_default();
        let t = r.tolerance.map(|t| format!(" (tol {t:.1e})")).unwrap_or_default();
        println!("{:<28} {:<7} {v}{t} {}", r.name, r.status, r.detail);
    }
    let doc = SelfcheckDocument { omega: a.omega, tolerance_scale: ctx.tolerance_scale, checks: checks.list, passed };
    write_json(&ctx.out, "selfcheck.json", &doc)?;
    if !passed {
        let failed: Vec<&str> = doc.checks.iter().filter(|r| r.status == "fail").map(|r| r.name.as_str()).collect();
        return Err(CliError::Numerical(format!("self-check failed: {}", failed.join(", "))));
    }
    Ok(())
}
