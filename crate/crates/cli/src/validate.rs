//! The validate subcommand: a fast cross-module invariant battery with a
//! deterministic pass/fail matrix. Exit code 1 when any check fails.

use crate::{sci, write_artifact, CliResult, ValidateArgs};
use rand::{Rng, SeedableRng};
use semioverlap_core::hamiltonian::{momentum, shifted_oscillator};
use semioverlap_core::{
    bohr_sommerfeld, connection_ratio, convergence_study, cycle_action, find_intersections,
    overlap_asymptotic, period, ponzano_regge, racah_6j, trace_auto, verify_hessian_identity,
    PhasePoint, PolyHamiltonian, SixJInput, WkbState,
};
use std::f64::consts::PI;
use std::process::ExitCode;

type Check = (&'static str, fn(u64) -> Result<(), String>);

fn bs_harmonic_exactness(_: u64) -> Result<(), String> {
    let h = shifted_oscillator(0.0);
    let hbar = 0.1;
    for n in 0..5u32 {
        let want = hbar * (n as f64 + 0.5);
        let seed = PhasePoint::new((2.0 * 0.01f64).sqrt(), 0.0);
        let bs = bohr_sommerfeld(&h, hbar, n, (0.005, want + 0.049), seed)
            .map_err(|e| e.to_string())?;
        if (bs.b - want).abs() > 1e-8 {
            return Err(format!("level {n}: {} vs {}", sci(bs.b), sci(want)));
        }
    }
    Ok(())
}

fn wkb_loop_closure(_: u64) -> Result<(), String> {
    let h = shifted_oscillator(0.0);
    let hbar = 0.1;
    let on = WkbState::new(trace_auto(&h, hbar * 3.5).map_err(|e| e.to_string())?, hbar)
        .map_err(|e| e.to_string())?;
    if on.closure_defect() > 1e-6 {
        return Err(format!("defect {} on a level", sci(on.closure_defect())));
    }
    let off = WkbState::new(trace_auto(&h, hbar * 3.75).map_err(|e| e.to_string())?, hbar)
        .map_err(|e| e.to_string())?;
    if off.closure_defect() < 1e-3 {
        return Err(format!("defect {} off a level", sci(off.closure_defect())));
    }
    Ok(())
}

fn airy_connection_ratio(_: u64) -> Result<(), String> {
    for alpha in [0.7, 2.0, -0.4, -3.0] {
        let r = connection_ratio(alpha);
        let want_im = alpha.signum();
        if (r.re).abs() > 1e-14 || (r.im - want_im).abs() > 1e-14 {
            return Err(format!("alpha {alpha}: ratio {r}"));
        }
    }
    Ok(())
}

fn levelcurve_action_period(_: u64) -> Result<(), String> {
    let h = PolyHamiltonian::new(vec![
        vec![0.0, 0.0, 0.0, 0.0, 1.0],
        vec![0.0, 0.0, 0.0, 0.0, 0.0],
        vec![0.5, 0.0, 0.0, 0.0, 0.0],
    ])
    .map_err(|e| e.to_string())?;
    let b = 1.0;
    let db = 1e-5;
    let t = period(&trace_auto(&h, b).map_err(|e| e.to_string())?);
    let a_hi = cycle_action(&trace_auto(&h, b + db).map_err(|e| e.to_string())?);
    let a_lo = cycle_action(&trace_auto(&h, b - db).map_err(|e| e.to_string())?);
    let fd = (a_hi - a_lo) / (2.0 * db);
    if ((t - fd) / fd).abs() > 1e-6 {
        return Err(format!("period {} vs dA/db {}", sci(t), sci(fd)));
    }
    Ok(())
}

fn overlap_two_circle_interference(_: u64) -> Result<(), String> {
    let hbar = 1.0 / 9.5;
    let b = 1.0;
    let d = 1.0;
    let h1 = shifted_oscillator(0.0);
    let h2 = shifted_oscillator(d);
    let ov = overlap_asymptotic(&h1, b, &h2, b, hbar).map_err(|e| e.to_string())?;
    let r = (2.0 * b).sqrt();
    let lens = 2.0 * r * r * (d / (2.0 * r)).acos() - 0.5 * d * (4.0 * r * r - d * d).sqrt();
    let p_star = (2.0 * b - 0.25 * d * d).sqrt();
    let want = 2.0 * (lens / (2.0 * hbar) - PI / 4.0).cos().abs()
        / ((2.0 * PI * hbar).sqrt() * (p_star * d).sqrt());
    if (ov.modulus() - want).abs() > 1e-6 * want.max(1.0) {
        return Err(format!("{} vs closed form {}", sci(ov.modulus()), sci(want)));
    }
    Ok(())
}

fn overlap_swap_symmetry(_: u64) -> Result<(), String> {
    let hbar = 1.0 / 9.5;
    let h1 = shifted_oscillator(0.0);
    let h2 = shifted_oscillator(1.0);
    let a = overlap_asymptotic(&h1, 1.0, &h2, 1.0, hbar).map_err(|e| e.to_string())?;
    let b = overlap_asymptotic(&h2, 1.0, &h1, 1.0, hbar).map_err(|e| e.to_string())?;
    if (a.modulus() - b.modulus()).abs() > 1e-10 * a.modulus().max(1.0) {
        return Err(format!("{} vs {}", sci(a.modulus()), sci(b.modulus())));
    }
    Ok(())
}

fn overlap_momentum_reduction(_: u64) -> Result<(), String> {
    let hbar = 1.0 / 4.5;
    let h1 = shifted_oscillator(0.0);
    let st = WkbState::new(
        trace_auto(&h1.swap_pq(), 1.0).map_err(|e| e.to_string())?,
        hbar,
    )
    .map_err(|e| e.to_string())?;
    let p_line = 0.3;
    let ov = overlap_asymptotic(&h1, 1.0, &momentum(), p_line, hbar).map_err(|e| e.to_string())?;
    let got = ov.modulus() * (2.0 * PI * hbar).sqrt();
    let want = st.eval(p_line).norm();
    if (got - want).abs() > 1e-10 * want.max(1.0) {
        return Err(format!("{} vs {}", sci(got), sci(want)));
    }
    Ok(())
}

fn overlap_hessian_identity(_: u64) -> Result<(), String> {
    let h1 = shifted_oscillator(0.0);
    let h2 = shifted_oscillator(1.0);
    let ix = find_intersections(&h1, 1.0, &h2, 1.0).map_err(|e| e.to_string())?;
    let l1 = trace_auto(&h1, 1.0).map_err(|e| e.to_string())?;
    let l2 = trace_auto(&h2, 1.0).map_err(|e| e.to_string())?;
    for c in &ix.points {
        let r = verify_hessian_identity(&l1, &l2, c).map_err(|e| e.to_string())?;
        if r > 1e-5 {
            return Err(format!("residual {} at p {}", sci(r), sci(c.point.p)));
        }
    }
    Ok(())
}

fn sixj_orthogonality(_: u64) -> Result<(), String> {
    // Sum over j12 of (2j12+1)(2j23+1) {..j23}{..j23'} = delta, spins <= 3/2.
    let max_tj = 3u32;
    for tj1 in 0..=max_tj {
        for tj2 in 0..=max_tj {
            for tj3 in 0..=max_tj {
                for tj4 in 0..=max_tj {
                    // Both couplings must close on integer total spins.
                    if (tj1 + tj2 + tj3 + tj4) % 2 != 0 {
                        continue;
                    }
                    let mut lo23 = tj1.abs_diff(tj4).max(tj3.abs_diff(tj2));
                    if (lo23 + tj1 + tj4) % 2 != 0 {
                        lo23 += 1;
                    }
                    let hi23 = (tj1 + tj4).min(tj3 + tj2);
                    if lo23 > hi23 {
                        continue;
                    }
                    let mut lo12 = tj1.abs_diff(tj2).max(tj3.abs_diff(tj4));
                    if (lo12 + tj1 + tj2) % 2 != 0 {
                        lo12 += 1;
                    }
                    let hi12 = (tj1 + tj2).min(tj3 + tj4);
                    let mut a23 = lo23;
                    while a23 <= hi23 {
                        let mut b23 = lo23;
                        while b23 <= hi23 {
                            let mut sum = 0.0;
                            let mut t12 = lo12;
                            while t12 <= hi12 {
                                let sa =
                                    SixJInput::new([tj1, tj2, t12, tj3, tj4, a23])
                                        .map_err(|e| e.to_string())?;
                                let sb =
                                    SixJInput::new([tj1, tj2, t12, tj3, tj4, b23])
                                        .map_err(|e| e.to_string())?;
                                sum += (t12 as f64 + 1.0)
                                    * (a23 as f64 + 1.0)
                                    * racah_6j(&sa).to_f64()
                                    * racah_6j(&sb).to_f64();
                                t12 += 2;
                            }
                            let want = f64::from(a23 == b23);
                            if (sum - want).abs() > 1e-12 {
                                return Err(format!(
                                    "quad ({tj1},{tj2},{tj3},{tj4}) j23 pair ({a23},{b23}): {}",
                                    sci(sum)
                                ));
                            }
                            b23 += 2;
                        }
                        a23 += 2;
                    }
                }
            }
        }
    }
    Ok(())
}

fn sixj_pr_equilateral(_: u64) -> Result<(), String> {
    let input = SixJInput::new([16; 6]).map_err(|e| e.to_string())?;
    let exact = racah_6j(&input).to_f64();
    let pr = ponzano_regge(&input).map_err(|e| e.to_string())?;
    let rel = (exact - pr).abs() / exact.abs();
    if rel > 0.1 {
        return Err(format!("exact {} vs pr {} (rel {})", sci(exact), sci(pr), sci(rel)));
    }
    Ok(())
}

fn sixj_scaling_improves(_: u64) -> Result<(), String> {
    let base = SixJInput::new([8; 6]).map_err(|e| e.to_string())?;
    let study = convergence_study(&base, &[1, 2]).map_err(|e| e.to_string())?;
    if study.rows[1].ratio >= study.rows[0].ratio {
        return Err(format!(
            "rms ratio {} at scale 2 vs {} at scale 1",
            sci(study.rows[1].ratio),
            sci(study.rows[0].ratio)
        ));
    }
    Ok(())
}

fn random_spot_check(seed: u64) -> Result<(), String> {
    let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
    let d = rng.gen_range(1.2..2.2);
    let h1 = shifted_oscillator(0.0);
    let h2 = shifted_oscillator(d);
    let hbar = 1.0 / 9.5;
    let a = overlap_asymptotic(&h1, 1.0, &h2, 1.0, hbar).map_err(|e| e.to_string())?;
    let b = overlap_asymptotic(&h2, 1.0, &h1, 1.0, hbar).map_err(|e| e.to_string())?;
    if (a.modulus() - b.modulus()).abs() > 1e-9 * a.modulus().max(1.0) {
        return Err(format!("d {}: swap moduli {} vs {}", d, sci(a.modulus()), sci(b.modulus())));
    }
    let ix = find_intersections(&h1, 1.0, &h2, 1.0).map_err(|e| e.to_string())?;
    let l1 = trace_auto(&h1, 1.0).map_err(|e| e.to_string())?;
    let l2 = trace_auto(&h2, 1.0).map_err(|e| e.to_string())?;
    for c in &ix.points {
        let r = verify_hessian_identity(&l1, &l2, c).map_err(|e| e.to_string())?;
        if r > 1e-3 {
            return Err(format!("d {}: hessian residual {}", d, sci(r)));
        }
    }
    Ok(())
}

pub fn run(args: &ValidateArgs, seed: u64) -> CliResult<ExitCode> {
    let checks: &[Check] = &[
        ("bs-harmonic-exactness", bs_harmonic_exactness),
        ("wkb-loop-closure", wkb_loop_closure),
        ("airy-connection-ratio", airy_connection_ratio),
        ("levelcurve-action-period", levelcurve_action_period),
        ("overlap-two-circle-interference", overlap_two_circle_interference),
        ("overlap-swap-symmetry", overlap_swap_symmetry),
        ("overlap-momentum-reduction", overlap_momentum_reduction),
        ("overlap-hessian-identity", overlap_hessian_identity),
        ("sixj-orthogonality", sixj_orthogonality),
        ("sixj-pr-equilateral", sixj_pr_equilateral),
        ("sixj-scaling-improves", sixj_scaling_improves),
        ("random-spot-check", random_spot_check),
    ];
    let mut out = String::new();
    out.push_str(&format!("# semioverlap validate --seed {seed}\n"));
    let mut passed = 0usize;
    for (name, check) in checks {
        match check(seed) {
            Ok(()) => {
                passed += 1;
                out.push_str(&format!("PASS {name}\n"));
            }
            Err(detail) => out.push_str(&format!("FAIL {name}: {detail}\n")),
        }
    }
    out.push_str(&format!("# {passed}/{} checks passed\n", checks.len()));
    write_artifact(&args.output, &out)?;
    Ok(if passed == checks.len() { ExitCode::SUCCESS } else { ExitCode::from(1) })
}
