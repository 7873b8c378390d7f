//! Drivers for the spectrum, wkb-eval, and overlap subcommands: configure
//! grids, solve Bohr-Sommerfeld levels against the exact-oracle bracket,
//! and emit the CSV artifacts.

use crate::model::load_model;
use crate::pool::parallel_map;
use crate::{config, domain, sci, write_artifact, CliResult, OverlapArgs, SpectrumArgs, WkbEvalArgs};
use semioverlap_core::quantize::BsLevel;
use semioverlap_core::{
    basis_overlap, bohr_sommerfeld, eigenbasis, overlap_asymptotic, period, trace_auto,
    PolyHamiltonian, QuantumGrid, WkbState,
};
use std::collections::BTreeMap;
use std::process::ExitCode;

/// Validates the RunConfig invariants `h > 0` and `N` a power of two, then
/// builds the grid.
fn make_grid(n: usize, hbar: f64, box_r: f64) -> CliResult<QuantumGrid> {
    if !(hbar > 0.0) {
        return Err(config(format!("--hbar must be positive, got {hbar}")));
    }
    if n < 4 || !n.is_power_of_two() {
        return Err(config(format!("--grid must be a power of two >= 4, got {n}")));
    }
    if !(box_r > 0.0) {
        return Err(config(format!("--box must be positive, got {box_r}")));
    }
    QuantumGrid::new(n, hbar, -box_r, box_r).map_err(config)
}

/// Potential floor `min_q H(0, q)` over the box, sampled finely; lower
/// bound for any level with a nonempty classical fiber.
fn v_floor(h: &PolyHamiltonian, box_r: f64) -> f64 {
    let m = 4096;
    (0..=m)
        .map(|i| h.eval(0.0, -box_r + 2.0 * box_r * i as f64 / m as f64))
        .fold(f64::INFINITY, f64::min)
}

/// Bohr-Sommerfeld level `n`, bracketed by the midpoints of the exact
/// spectrum's neighboring gaps (the BS error is O(h^2), far below the
/// level spacing O(h), so the bracket always contains the root).
fn bs_for_level(
    h: &PolyHamiltonian,
    hbar: f64,
    n: u32,
    exact: &[f64],
    vmin: f64,
) -> CliResult<BsLevel> {
    let i = n as usize;
    if i + 1 >= exact.len() {
        return Err(domain(format!("exact oracle provides no bracket for level {n}")));
    }
    let e = exact[i];
    let gap_lo = if i == 0 { exact[1] - exact[0] } else { e - exact[i - 1] };
    let gap_hi = exact[i + 1] - e;
    let scale = e.abs().max(1.0);
    let lo = (e - 0.5 * gap_lo).max(vmin + 1e-7 * scale);
    let hi = e + 0.5 * gap_hi;
    let seed = trace_auto(h, lo).map_err(domain)?.samples()[0];
    bohr_sommerfeld(h, hbar, n, (lo, hi), seed).map_err(domain)
}

pub fn run_spectrum(args: &SpectrumArgs, seed: u64) -> CliResult<ExitCode> {
    let h = load_model(&args.model)?;
    if args.levels == 0 {
        return Err(config("--levels must be at least 1"));
    }
    let grid = make_grid(args.grid, args.hbar, args.box_r)?;
    let basis = eigenbasis(&h, &grid, args.levels as usize + 1).map_err(domain)?;
    let vmin = v_floor(&h, args.box_r);

    let ns: Vec<u32> = (0..args.levels).collect();
    let rows = parallel_map(&ns, |&n| -> CliResult<String> {
        let bs = bs_for_level(&h, args.hbar, n, &basis.values, vmin)?;
        let e = basis.values[n as usize];
        let abs_err = (bs.b - e).abs();
        let rel_err = abs_err / e.abs().max(1e-300);
        Ok(format!("{n},{},{},{},{}", sci(bs.b), sci(e), sci(abs_err), sci(rel_err)))
    });

    let mut out = String::new();
    out.push_str(&format!(
        "# semioverlap spectrum --model {} --hbar {} --levels {} --grid {} --box {} --seed {seed}\n",
        args.model.display(),
        args.hbar,
        args.levels,
        args.grid,
        args.box_r
    ));
    out.push_str("n,b_bs,b_exact,abs_err,rel_err\n");
    for row in rows {
        out.push_str(&row?);
        out.push('\n');
    }
    write_artifact(&args.output, &out)?;
    Ok(ExitCode::SUCCESS)
}

pub fn run_wkb_eval(args: &WkbEvalArgs, seed: u64) -> CliResult<ExitCode> {
    let h = load_model(&args.model)?;
    let grid = make_grid(args.grid, args.hbar, args.box_r)?;
    let basis = eigenbasis(&h, &grid, args.level as usize + 2).map_err(domain)?;
    let vmin = v_floor(&h, args.box_r);
    let bs = bs_for_level(&h, args.hbar, args.level, &basis.values, vmin)?;

    let ls = trace_auto(&h, bs.b).map_err(domain)?;
    if let Some(curve_path) = &args.curve_output {
        let mut curve = String::new();
        curve.push_str(&format!(
            "# semioverlap wkb-eval --model {} --hbar {} --level {} (level curve at b = {})\n",
            args.model.display(),
            args.hbar,
            args.level,
            sci(bs.b)
        ));
        curve.push_str("idx,q,p,is_turning_point\n");
        for (i, (s, flag)) in ls.samples().iter().zip(ls.turning_flags()).enumerate() {
            let tp = u8::from(flag.is_some());
            curve.push_str(&format!("{i},{},{},{tp}\n", sci(s.q), sci(s.p)));
        }
        write_artifact(&Some(curve_path.clone()), &curve)?;
    }
    let t_period = period(&ls);
    let state = WkbState::new(ls, args.hbar).map_err(domain)?;
    let exact_state = &basis.states[args.level as usize];

    let mut out = String::new();
    out.push_str(&format!(
        "# semioverlap wkb-eval --model {} --hbar {} --level {} --grid {} --box {} --seed {seed}\n",
        args.model.display(),
        args.hbar,
        args.level,
        args.grid,
        args.box_r
    ));
    out.push_str("q,re_psi,im_psi,abs_psi,abs_psi_exact\n");
    let norm = t_period.sqrt();
    for i in 0..grid.n {
        let q = grid.q(i);
        let psi = state.eval(q) / norm;
        let exact = exact_state[i].norm();
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            sci(q),
            sci(psi.re),
            sci(psi.im),
            sci(psi.norm()),
            sci(exact)
        ));
    }
    write_artifact(&args.output, &out)?;
    Ok(ExitCode::SUCCESS)
}

pub fn run_overlap(args: &OverlapArgs, seed: u64) -> CliResult<ExitCode> {
    let h1 = load_model(&args.model1)?;
    let h2 = load_model(&args.model2)?;

    let mut out = String::new();
    let sweep = match &args.sweep_h {
        Some(list) => Some(crate::parse_list::<f64>(list, "--sweep-h")?),
        None => None,
    };

    if let (Some(b1), Some(b2)) = (args.b1, args.b2) {
        // Explicit levels: no Bohr-Sommerfeld solve, no oracle columns.
        if sweep.is_some() {
            return Err(config("--sweep-h requires level indices --n1/--n2"));
        }
        if !(args.hbar > 0.0) {
            return Err(config(format!("--hbar must be positive, got {}", args.hbar)));
        }
        let ov = overlap_asymptotic(&h1, b1, &h2, b2, args.hbar).map_err(domain)?;
        let abs_asym = ov
            .normalized_modulus()
            .ok_or_else(|| domain("second fiber has no closed orbit to normalize against"))?;
        out.push_str(&format!(
            "# semioverlap overlap --model1 {} --model2 {} --hbar {} --b1 {} --b2 {} --seed {seed}\n",
            args.model1.display(),
            args.model2.display(),
            args.hbar,
            b1,
            b2
        ));
        out.push_str("b1,b2,abs_asym,n_intersections\n");
        out.push_str(&format!(
            "{},{},{},{}\n",
            sci(b1),
            sci(b2),
            sci(abs_asym),
            ov.contributions.len()
        ));
        write_artifact(&args.output, &out)?;
        return Ok(ExitCode::SUCCESS);
    }

    let ns1 = crate::parse_list::<u32>(args.n1.as_deref().unwrap_or_default(), "--n1")?;
    let ns2 = crate::parse_list::<u32>(args.n2.as_deref().unwrap_or_default(), "--n2")?;
    let hs = sweep.clone().unwrap_or_else(|| vec![args.hbar]);
    let max1 = *ns1.iter().max().unwrap() as usize;
    let max2 = *ns2.iter().max().unwrap() as usize;
    let vmin1 = v_floor(&h1, args.box_r);
    let vmin2 = v_floor(&h2, args.box_r);

    out.push_str(&format!(
        "# semioverlap overlap --model1 {} --model2 {} --hbar {} --n1 {} --n2 {} --grid {} --box {}{} --seed {seed}\n",
        args.model1.display(),
        args.model2.display(),
        args.hbar,
        args.n1.as_deref().unwrap_or_default(),
        args.n2.as_deref().unwrap_or_default(),
        args.grid,
        args.box_r,
        match &args.sweep_h {
            Some(s) => format!(" --sweep-h {s}"),
            None => String::new(),
        }
    ));
    if sweep.is_some() {
        out.push_str("h,n1,n2,b1,b2,abs_asym,abs_exact,rel_err,n_intersections\n");
    } else {
        out.push_str("n1,n2,b1,b2,abs_asym,abs_exact,rel_err,n_intersections\n");
    }

    for &hbar in &hs {
        let grid = make_grid(args.grid, hbar, args.box_r)?;
        // Eigensolves are cached per (model, grid, h): one basis per system,
        // shared immutably by all sweep cells below.
        let basis1 = eigenbasis(&h1, &grid, max1 + 2).map_err(domain)?;
        let basis2 = eigenbasis(&h2, &grid, max2 + 2).map_err(domain)?;
        let mut b1_of = BTreeMap::new();
        for &n in &ns1 {
            b1_of.insert(n, bs_for_level(&h1, hbar, n, &basis1.values, vmin1)?.b);
        }
        let mut b2_of = BTreeMap::new();
        for &n in &ns2 {
            b2_of.insert(n, bs_for_level(&h2, hbar, n, &basis2.values, vmin2)?.b);
        }
        let cells: Vec<(u32, u32)> =
            ns1.iter().flat_map(|&a| ns2.iter().map(move |&b| (a, b))).collect();
        let rows = parallel_map(&cells, |&(n1, n2)| -> CliResult<String> {
            let b1 = b1_of[&n1];
            let b2 = b2_of[&n2];
            let ov = overlap_asymptotic(&h1, b1, &h2, b2, hbar).map_err(domain)?;
            let abs_asym = ov
                .normalized_modulus()
                .ok_or_else(|| domain("second fiber has no closed orbit to normalize against"))?;
            let abs_exact = basis_overlap(&basis1, n1 as usize, &basis2, n2 as usize)
                .map_err(domain)?
                .norm();
            let rel_err = (abs_asym - abs_exact).abs() / abs_exact.max(1e-300);
            let tail = format!(
                "{n1},{n2},{},{},{},{},{},{}",
                sci(b1),
                sci(b2),
                sci(abs_asym),
                sci(abs_exact),
                sci(rel_err),
                ov.contributions.len()
            );
            Ok(tail)
        });
        for row in rows {
            let row = row?;
            if sweep.is_some() {
                out.push_str(&format!("{},{row}\n", sci(hbar)));
            } else {
                out.push_str(&format!("{row}\n"));
            }
        }
    }
    write_artifact(&args.output, &out)?;
    Ok(ExitCode::SUCCESS)
}
