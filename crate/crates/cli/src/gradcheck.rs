//! `facn gradcheck`: verify analytic gradients against 64-bit central finite
//! differences, per scope or across the whole suite. Any failing member
//! makes the command exit nonzero.

use clap::Args as ClapArgs;
use facn_core::gradsuite::{self, Scope};

use crate::{CliError, Globals};

#[derive(ClapArgs)]
pub struct Args {
    /// One of: layers, encoder, cgb, decoder, discriminator, full-loss.
    /// Omit to run every scope.
    #[arg(long)]
    pub scope: Option<String>,
}

pub fn run(globals: &Globals, args: &Args) -> Result<(), CliError> {
    let seed = globals.seed();
    let scopes: Vec<Scope> = match &args.scope {
        Some(s) => vec![s.parse().map_err(|e: facn_core::Error| {
            CliError::Validation(e.to_string())
        })?],
        None => Scope::ALL.to_vec(),
    };

    println!(
        "{:<16} {:<28} {:>12} {:>8} {:>6}",
        "scope", "member", "max_rel_err", "coords", "status"
    );
    let mut failures = 0usize;
    for scope in &scopes {
        let checks = gradsuite::run_scope(*scope, seed)?;
        for c in &checks {
            let ok = c.passed();
            if !ok {
                failures += 1;
            }
            println!(
                "{:<16} {:<28} {:>12.3e} {:>8} {:>6}",
                scope.to_string(),
                c.name,
                c.report.max_rel_err,
                c.report.coords_checked,
                if ok { "ok" } else { "FAIL" }
            );
            if let (false, Some(w)) = (ok, &c.report.worst) {
                println!(
                    "    worst: {}[{}] analytic {:.6e} numeric {:.6e}",
                    w.param, w.index, w.analytic, w.numeric
                );
            }
        }
    }
    if failures > 0 {
        return Err(CliError::Runtime(format!(
            "{failures} gradient check(s) exceeded the {:.0e} tolerance",
            gradsuite::TOLERANCE
        )));
    }
    println!("all gradient checks within {:.0e}", gradsuite::TOLERANCE);
    Ok(())
}
