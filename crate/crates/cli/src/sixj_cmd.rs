//! The sixj subcommand: exact Racah values, Ponzano-Regge asymptotics, and
//! the semiclassical scaling study.
//!
//! Spins arrive in coupling order `j1 j2 j3 j4 j12 j23` and are stored
//! internally in the symbol layout `{j1 j2 j12; j3 j4 j23}`.

use crate::{config, domain, sci, write_artifact, CliResult, SixjArgs};
use semioverlap_core::{convergence_study, ponzano_regge, racah_6j, SixJInput};
use std::process::ExitCode;

/// Parses one spin: a nonnegative integer, a half-integer "a/2", or (with
/// `doubled`) a doubled integer 2j. Returns the doubled value.
fn parse_spin(tok: &str, doubled: bool) -> CliResult<u32> {
    let tok = tok.trim();
    if doubled {
        return tok
            .parse::<u32>()
            .map_err(|e| config(format!("invalid doubled spin {tok:?}: {e}")));
    }
    if let Some((num, den)) = tok.split_once('/') {
        if den.trim() != "2" {
            return Err(config(format!(
                "invalid spin {tok:?}: only halves like \"3/2\" are allowed"
            )));
        }
        return num
            .trim()
            .parse::<u32>()
            .map_err(|e| config(format!("invalid spin {tok:?}: {e}")));
    }
    let j = tok.parse::<u32>().map_err(|e| config(format!("invalid spin {tok:?}: {e}")))?;
    Ok(2 * j)
}

/// Reorders CLI coupling order into the symbol layout.
fn input_from_coupling(tj: [u32; 6]) -> CliResult<SixJInput> {
    let [j1, j2, j3, j4, j12, j23] = tj;
    SixJInput::new([j1, j2, j12, j3, j4, j23]).map_err(domain)
}

fn six_spins(args: &SixjArgs) -> CliResult<[u32; 6]> {
    if args.spins.len() != 6 {
        return Err(config(format!(
            "expected six spins j1 j2 j3 j4 j12 j23, got {}",
            args.spins.len()
        )));
    }
    let mut tj = [0u32; 6];
    for (slot, tok) in tj.iter_mut().zip(&args.spins) {
        *slot = parse_spin(tok, args.doubled)?;
    }
    Ok(tj)
}

pub fn run(args: &SixjArgs, seed: u64) -> CliResult<ExitCode> {
    if args.mode.converge {
        let base_list = args
            .base
            .as_deref()
            .ok_or_else(|| config("--converge requires --base j1,j2,j3,j4,j12,j23"))?;
        let scales_list = args
            .scales
            .as_deref()
            .ok_or_else(|| config("--converge requires --scales like 1,2,4,8"))?;
        let toks: Vec<&str> = base_list.split(',').collect();
        if toks.len() != 6 {
            return Err(config(format!("--base needs six spins, got {}", toks.len())));
        }
        let mut tj = [0u32; 6];
        for (slot, tok) in tj.iter_mut().zip(&toks) {
            *slot = parse_spin(tok, args.doubled)?;
        }
        let base = input_from_coupling(tj)?;
        let scales = crate::parse_list::<u32>(scales_list, "--scales")?;
        if scales.iter().any(|&s| s == 0) {
            return Err(config("--scales entries must be positive"));
        }
        let study = convergence_study(&base, &scales).map_err(domain)?;

        let mut out = String::new();
        out.push_str(&format!(
            "# semioverlap sixj --converge --base {base_list} --scales {scales_list}{} --seed {seed}\n",
            if args.doubled { " --doubled" } else { "" }
        ));
        out.push_str("lambda,j12,exact,pr,abs_err\n");
        for cell in &study.cells {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                cell.lambda,
                sci(cell.tj12 as f64 / 2.0),
                sci(cell.exact),
                sci(cell.pr),
                sci((cell.exact - cell.pr).abs())
            ));
        }
        write_artifact(&args.output, &out)?;
        return Ok(ExitCode::SUCCESS);
    }

    let input = input_from_coupling(six_spins(args)?)?;
    let value = if args.mode.exact {
        racah_6j(&input).to_f64()
    } else {
        ponzano_regge(&input).map_err(domain)?
    };
    write_artifact(&args.output, &format!("{}\n", sci(value)))?;
    Ok(ExitCode::SUCCESS)
}
