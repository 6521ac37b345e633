use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::json;
use strata_wave::function_space::{estimate_gevrey_constants, GevreyEstimate};
use strata_wave::inequality::{lemma_table, VerdictRow};
use strata_wave::io::{self, Encoding};
use strata_wave::regularity::{self, DecayFit, GevreyFit};
use strata_wave::solver::{self, Branch, ContinuationState};
use strata_wave::{Result, WaveError};

use crate::config::RunConfig;

fn write_text(dir: &Path, name: &str, text: &str) -> Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join(name);
    std::fs::write(&path, text)?;
    Ok(path)
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<PathBuf> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_text(dir, name, &text)
}

/// CSV files start with a comment line carrying the config hash.
fn csv_with_hash(hash: &str, body: &str) -> String {
    format!("# config_hash={hash}\n{body}")
}

pub fn laminar(cfg: &RunConfig, out: &Path) -> Result<()> {
    let hash = cfg.hash()?;
    let grid = cfg.grid()?;
    let kappa = match cfg.solver.kappa {
        Some(k) => k,
        None => solver::bifurcation_kappa(&cfg.params, None)?,
    };
    let prof = solver::solve_laminar(&cfg.params, &grid.p, kappa)?;
    let mut csv = String::from("p,H,H_p\n");
    for i in 0..prof.p.len() {
        let _ = writeln!(csv, "{:e},{:e},{:e}", prof.p[i], prof.h[i], prof.hp[i]);
    }
    write_text(out, "laminar_profile.csv", &csv_with_hash(&hash, &csv))?;
    let (lo, hi) = prof
        .hp
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(a, b), &v| (a.min(v), b.max(v)));
    write_json(
        out,
        "laminar_summary.json",
        &json!({
            "config_hash": hash,
            "kappa": kappa,
            "Q": prof.q_head,
            "surface_height": prof.h.last(),
            "min_hp": lo,
            "max_hp": hi,
        }),
    )?;
    println!("Q = {}", prof.q_head);
    Ok(())
}

#[derive(Serialize)]
struct StateRow {
    step: usize,
    amplitude: f64,
    #[serde(rename = "Q")]
    q_head: f64,
    residual: f64,
    newton_iterations: usize,
    quadratic_constant: Option<f64>,
    min_hp: f64,
    max_hp: f64,
    file: String,
}

fn state_row(st: &ContinuationState, file: String) -> StateRow {
    let (min_hp, max_hp) = st.h.min_max_hp();
    StateRow {
        step: st.step_count,
        amplitude: st.amplitude,
        q_head: st.q_head,
        residual: st.residual_norm,
        newton_iterations: st.newton_iterations(),
        quadratic_constant: st.quadratic_constant,
        min_hp,
        max_hp,
        file,
    }
}

fn branch_csv(rows: &[StateRow]) -> String {
    let mut csv = String::from("step,amplitude,Q,residual,newton_iterations,min_hp,max_hp,file\n");
    for r in rows {
        let _ = writeln!(
            csv,
            "{},{:e},{:e},{:e},{},{:e},{:e},{}",
            r.step,
            r.amplitude,
            r.q_head,
            r.residual,
            r.newton_iterations,
            r.min_hp,
            r.max_hp,
            r.file
        );
    }
    csv
}

fn run_branch(cfg: &RunConfig) -> Result<Branch> {
    if cfg.solver.amplitude_targets.is_empty() {
        return Err(WaveError::InvalidInput(
            "solver.amplitude_targets is empty".into(),
        ));
    }
    let grid = cfg.grid()?;
    solver::continuation_run(
        &grid,
        &cfg.params,
        &cfg.solver.amplitude_targets,
        &cfg.continuation_options(),
    )
}

/// `all_states` writes every state; otherwise only the last one as `state.field`.
pub fn branch(cfg: &RunConfig, out: &Path, all_states: bool) -> Result<()> {
    let hash = cfg.hash()?;
    let branch = run_branch(cfg)?;
    std::fs::create_dir_all(out)?;
    let mut rows = Vec::new();
    let n = branch.states.len();
    for (k, st) in branch.states.iter().enumerate() {
        let name = if all_states {
            format!("state_{k:03}.field")
        } else if k + 1 == n {
            "state.field".to_string()
        } else {
            String::new()
        };
        if !name.is_empty() {
            io::write_field(
                &out.join(&name),
                &st.h,
                &hash,
                Encoding::F64le,
                Some(st.q_head),
                Some(st.amplitude),
            )?;
        }
        rows.push(state_row(st, name));
    }
    write_text(
        out,
        "branch_summary.csv",
        &csv_with_hash(&hash, &branch_csv(&rows)),
    )?;
    write_json(
        out,
        "branch_summary.json",
        &json!({
            "config_hash": hash,
            "kappa_star": branch.kappa_star,
            "laminar_Q": branch.laminar_q,
            "states": rows,
            "failure": branch.failure.as_ref().map(|e| e.to_string()),
        }),
    )?;
    println!("{} state(s), kappa* = {}", rows.len(), branch.kappa_star);
    match branch.failure {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

#[derive(Serialize)]
struct FitOrNote<T> {
    fit: Option<T>,
    note: Option<String>,
}

fn fit_or_note<T>(r: Result<T>) -> FitOrNote<T> {
    match r {
        Ok(fit) => FitOrNote {
            fit: Some(fit),
            note: None,
        },
        Err(e) => FitOrNote {
            fit: None,
            note: Some(e.to_string()),
        },
    }
}

pub fn analyze(cfg: &RunConfig, state: &Path, out: &Path) -> Result<()> {
    let hash = cfg.hash()?;
    let (header, h) = io::read_field(state)?;
    let report = regularity::analyze(&h, &cfg.analysis_options())?;
    let surface = h.surface();
    let surface_fit: FitOrNote<DecayFit> = fit_or_note(regularity::fourier_decay_fit(&surface));
    let gevrey: FitOrNote<GevreyFit> = fit_or_note(regularity::gevrey_index_fit(&surface));
    let k_max = cfg.diagnostics.k_max;
    let rho: FitOrNote<GevreyEstimate> =
        fit_or_note(estimate_gevrey_constants(&cfg.params.rho, k_max));
    let beta: FitOrNote<GevreyEstimate> =
        fit_or_note(estimate_gevrey_constants(&cfg.params.beta, k_max));
    write_json(
        out,
        "regularity_report.json",
        &json!({
            "config_hash": hash,
            "state_config_hash": header.config_hash,
            "state_amplitude": header.amplitude,
            "report": report,
            "surface_decay": surface_fit,
            "gevrey": gevrey,
            "parameter_gevrey": {"k_max": k_max, "rho": rho, "beta": beta},
        }),
    )?;
    write_text(
        out,
        "decay_surface.csv",
        &csv_with_hash(&hash, &regularity::decay_csv(&surface)),
    )?;
    let mut all = String::from("p_level,k,log_abs_c\n");
    for i in 0..h.grid.np {
        for line in regularity::decay_csv(&h.row(i)).lines().skip(1) {
            let _ = writeln!(all, "{:e},{}", h.grid.p[i], line);
        }
    }
    write_text(out, "decay_streamlines.csv", &csv_with_hash(&hash, &all))?;
    println!(
        "L = {}, E_m tail {}",
        report.l_estimate,
        if report.em_pass {
            "non-increasing"
        } else {
            "increasing"
        }
    );
    Ok(())
}

pub fn lemmas(alpha_max: usize, m_max: usize, out: Option<&Path>) -> Result<bool> {
    let rows: Vec<VerdictRow> = lemma_table(alpha_max, m_max)?;
    let hash = io::config_hash(&json!({"alpha_max": alpha_max, "m_max": m_max}))?;
    let all_ok = rows.iter().all(|r| r.ok);
    let doc = json!({
        "config_hash": hash,
        "alpha_max": alpha_max,
        "m_max": m_max,
        "all_ok": all_ok,
        "rows": rows,
    });
    if let Some(dir) = out {
        write_json(dir, "lemmas.json", &doc)?;
    }
    println!("{}", serde_json::to_string_pretty(&doc)?);
    Ok(all_ok)
}
