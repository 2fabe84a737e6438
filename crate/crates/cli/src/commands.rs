//! The `solve`, `oracle`, `sweep` and `analyze` subcommands.
//!
//! Each returns the JSON report it wrote to `report.json`.

use std::sync::Arc;

use entwave_core::cost::{cost_model_report, measure_reduced, reduce_workload, CostPoint};
use entwave_core::entanglement::{fragmentation_report, spectrum_csv, weights_csv, Fitted};
use entwave_core::fit::{fit_amdahl, fit_speedup_power};
use entwave_core::lanczos::trace_csv;
use entwave_core::oracle::DENSE_EIGEN_LIMIT;
use entwave_core::state_io::{decode_state, encode_state, hex, model_hash};
use entwave_core::transport::{Communicator, MessageCounter, Phase};
use entwave_core::{
    build_block_operator, lanczos_ground_state, make_layout, schmidt_decompose, sector_weights_and_ipr, Assignment,
    Bipartition, BlockOperator, BlockWavefunction, HamiltonianEngine, LanczosResult, ModelSpec, OracleHamiltonian,
    Scalar, ScalarKind, SectorPairTable,
};
use num_complex::Complex64;
use serde_json::{json, Value};

use crate::config::{Resolved, SweepAxis};
use crate::error::CliError;
use crate::output::OutputDir;

struct Problem {
    bip: Bipartition,
    table: SectorPairTable,
    operator: BlockOperator,
}

fn problem(r: &Resolved) -> Result<Problem, CliError> {
    let bip = Bipartition::new(&r.config.model, &r.cut)?;
    let table = bip.table(&r.target)?;
    let operator = build_block_operator(&bip, &table)?;
    Ok(Problem { bip, table, operator })
}

fn comm_for(r: &Resolved, ranks: usize) -> Communicator {
    Communicator::new(ranks, r.config.run.schedule)
}

fn counters_json(c: &MessageCounter) -> Value {
    json!({
        "phases": c.rows(),
        "rank_flops": c.rank_flops,
        "rank_sent": c.rank_sent,
    })
}

fn transposes(c: &MessageCounter) -> u64 {
    c.total(&[Phase::LeftDiagonal, Phase::Boundary]).calls
}

fn solve_on<T: Scalar>(
    r: &Resolved,
    engine: &HamiltonianEngine,
    comm: &Communicator,
) -> Result<LanczosResult<T>, CliError> {
    let cfg = r.config.lanczos();
    Ok(lanczos_ground_state(engine.layout(), comm, &cfg, |v: &BlockWavefunction<T>| engine.apply(v, comm))?)
}

fn run_summary<T>(ranks: usize, res: &LanczosResult<T>) -> Value {
    json!({
        "ranks": ranks,
        "energy": res.energy,
        "iterations": res.iterations,
        "residual": res.residual,
        "ritz_gap": res.ritz_gap,
        "degenerate": res.degenerate,
        "max_overlap": res.max_overlap,
    })
}

/// Schmidt spectrum, sector weights and fragmentation fits of `psi`;
/// writes the spectrum, weight and fit files and returns the summary.
fn entanglement_outputs<T: Scalar>(
    r: &Resolved,
    psi: &BlockWavefunction<T>,
    comm: &Communicator,
    out: &mut OutputDir,
) -> Result<Value, CliError> {
    let a = &r.config.analysis;
    let report = schmidt_decompose(psi, comm, a.schmidt_cutoff)?;
    let header = out.csv_header();
    out.bytes("entanglement_spectrum.csv", spectrum_csv(&report, &header).as_bytes())?;
    out.bytes("sector_weights.csv", weights_csv(&report, &header).as_bytes())?;
    let frag = fragmentation_report(&report, &a.fragmentation());
    out.json("fits.json", &json!({ "fragmentation": frag }))?;

    let mut ipr = Vec::new();
    for &p in &r.config.run.ranks {
        for mode in [Assignment::SectorLevel, Assignment::ColumnLevel] {
            let w = sector_weights_and_ipr(&report, mode, p)?;
            ipr.push(json!({ "assignment": mode, "ranks": p, "w_p": w.ipr, "total": w.total() }));
        }
    }
    Ok(json!({
        "cutoff": report.cutoff,
        "entropy": report.entropy,
        "total_weight": report.total_weight,
        "sector_pairs": report.sectors.len(),
        "occupied_sectors": frag.sectors,
        "schmidt_rank": report.sectors.iter().map(|s| s.chi).sum::<usize>(),
        "alpha": frag.exponential.ok().map(|e| e.alpha),
        "gamma": frag.power_law.ok().map(|p| p.gamma),
        "n_eff": frag.n_eff,
        "q_star": frag.q_star,
        "process_weights": ipr,
    }))
}

fn header_json(r: &Resolved, table: &SectorPairTable, command: &str) -> serde_json::Map<String, Value> {
    let mut m = serde_json::Map::new();
    m.insert("command".into(), json!(command));
    m.insert("model".into(), json!(r.config.model));
    m.insert("cut".into(), json!(r.cut));
    m.insert("target".into(), json!(r.target));
    m.insert("scalar".into(), json!(r.config.run.scalar));
    m.insert("dimension".into(), json!(table.dimension()));
    m.insert("sector_pairs".into(), json!(table.len()));
    m
}

pub fn solve(r: &Resolved) -> Result<Value, CliError> {
    match r.config.run.scalar {
        ScalarKind::Real => solve_typed::<f64>(r),
        ScalarKind::Complex => solve_typed::<Complex64>(r),
    }
}

fn solve_typed<T: Scalar>(r: &Resolved) -> Result<Value, CliError> {
    let pb = problem(r)?;
    let mut out = OutputDir::create(r)?;
    let mut runs = Vec::new();
    let mut counters = Vec::new();
    let mut plans = Vec::new();
    let mut reference: Option<(LanczosResult<T>, Communicator)> = None;

    for &p in &r.config.run.ranks {
        let layout = make_layout(pb.table.clone(), p)?;
        let engine = HamiltonianEngine::new(pb.operator.clone(), Arc::clone(&layout))?;
        let comm = comm_for(r, p);
        let res = solve_on::<T>(r, &engine, &comm)?;
        let whole = comm.snapshot();
        let before = comm.snapshot();
        engine.apply(&res.state, &comm)?;
        let one = comm.snapshot().since(&before);
        runs.push(run_summary(p, &res));
        counters.push(json!({ "ranks": p, "matvec": counters_json(&one), "solve": counters_json(&whole) }));
        plans.push(serde_json::to_value(engine.plan()).expect("plan serializes"));
        if reference.is_none() {
            reference = Some((res, comm));
        }
    }
    let (res, comm) = reference.expect("at least one rank count");
    let spread = runs.iter().map(|v| (v["energy"].as_f64().unwrap_or(f64::NAN) - res.energy).abs()).fold(0.0, f64::max);

    out.csv("convergence.csv", &trace_csv(&res.trace))?;
    if r.config.output.write_state {
        let bytes = encode_state(&res.state, model_hash(&r.config.model, &r.cut), r.hash_bytes);
        out.bytes("state.bin", &bytes)?;
    }
    out.json("counters.json", &json!({ "runs": counters }))?;
    if r.config.output.write_plan {
        out.json("plan.json", &json!({ "plans": plans }))?;
    }

    let mut report = header_json(r, &pb.table, "solve");
    report.insert("energy".into(), json!(res.energy));
    report.insert("iterations".into(), json!(res.iterations));
    report.insert("residual".into(), json!(res.residual));
    report.insert("degenerate".into(), json!(res.degenerate));
    report.insert("runs".into(), json!(runs));
    report.insert("energy_spread".into(), json!(spread));
    if r.config.analysis.entanglement {
        report.insert("entanglement".into(), entanglement_outputs(r, &res.state, &comm, &mut out)?);
    }
    let report = Value::Object(report);
    out.json("report.json", &report)?;
    Ok(report)
}

pub fn oracle(r: &Resolved) -> Result<Value, CliError> {
    match r.config.run.scalar {
        ScalarKind::Real => oracle_typed::<f64>(r),
        ScalarKind::Complex => oracle_typed::<Complex64>(r),
    }
}

/// Largest deviation between two pair-ordered vectors and the pair holding it.
fn worst_pair<T: Scalar>(table: &SectorPairTable, a: &[T], b: &[T]) -> (f64, usize) {
    let offsets = table.offsets();
    let mut worst = (0.0, 0);
    for (q, p) in table.pairs().iter().enumerate() {
        for i in offsets[q]..offsets[q] + p.volume() {
            let d = (a[i] - b[i]).abs_sq().sqrt();
            if d > worst.0 {
                worst = (d, q);
            }
        }
    }
    worst
}

fn oracle_typed<T: Scalar>(r: &Resolved) -> Result<Value, CliError> {
    let mut pb = problem(r)?;
    let cfg = &r.config.oracle;
    let oracle = OracleHamiltonian::build(&pb.bip, &pb.table, r.config.run.oracle_cap)?;
    let corrupted = match cfg.corrupt_boundary {
        Some(m) => Some(pb.operator.corrupt_boundary_sign(m).ok_or_else(|| {
            CliError::Config(format!("oracle.corrupt_boundary: no boundary term {m} with a left block"))
        })?),
        None => None,
    };
    let mut out = OutputDir::create(r)?;
    let dense_energy = if oracle.dim <= DENSE_EIGEN_LIMIT { Some(oracle.ground_energy()?) } else { None };

    let mut runs = Vec::new();
    let mut failures = Vec::new();
    for &p in &r.config.run.ranks {
        let layout = make_layout(pb.table.clone(), p)?;
        let engine = HamiltonianEngine::new(pb.operator.clone(), Arc::clone(&layout))?;
        let comm = comm_for(r, p);
        let mut worst = (0.0f64, 0usize);
        let mut census_ok = true;
        for s in 0..cfg.samples {
            let psi = BlockWavefunction::<T>::random(&layout, r.config.run.seed.wrapping_add(s as u64), &comm);
            let before = comm.snapshot();
            let h = engine.apply(&psi, &comm)?;
            let calls = transposes(&comm.snapshot().since(&before));
            census_ok &= calls == engine.plan().totals.transposes as u64;
            let got = h.gather_vector(&comm)?;
            let want = oracle.apply(&psi.gather_vector(&comm)?);
            let w = worst_pair(&pb.table, &got, &want);
            if w.0 > worst.0 {
                worst = w;
            }
        }
        let res = solve_on::<T>(r, &engine, &comm)?;
        let energy_deviation = dense_energy.map(|e| (res.energy - e).abs());
        let pair = &pb.table.pairs()[worst.1];
        if worst.0 > cfg.tolerance {
            failures.push(format!(
                "P={p}: matvec deviation {:e} in pair {} ({} | {})",
                worst.0, worst.1, pair.left, pair.right
            ));
        }
        if energy_deviation.is_some_and(|d| d > cfg.energy_tolerance) {
            failures.push(format!("P={p}: energy deviation {:e}", energy_deviation.unwrap()));
        }
        if !census_ok {
            failures.push(format!("P={p}: counted transposes differ from the plan"));
        }
        runs.push(json!({
            "ranks": p,
            "max_matvec_deviation": worst.0,
            "worst_pair": { "index": worst.1, "q_left": pair.left, "q_right": pair.right },
            "energy": res.energy,
            "energy_deviation": energy_deviation,
            "planned_transposes": engine.plan().totals.transposes,
            "census_ok": census_ok,
        }));
    }

    let mut report = header_json(r, &pb.table, "oracle");
    report.insert("samples".into(), json!(cfg.samples));
    report.insert("tolerance".into(), json!(cfg.tolerance));
    report.insert("energy_tolerance".into(), json!(cfg.energy_tolerance));
    report.insert("dense_energy".into(), json!(dense_energy));
    if dense_energy.is_none() {
        report.insert(
            "notice".into(),
            json!(format!("dimension {} above {DENSE_EIGEN_LIMIT}: energy comparison skipped", oracle.dim)),
        );
    }
    if let Some(q) = corrupted {
        report.insert("corrupted_left_sector".into(), json!(q));
    }
    report.insert("runs".into(), json!(runs));
    report.insert("pass".into(), json!(failures.is_empty()));
    report.insert("failures".into(), json!(failures));
    let report = Value::Object(report);
    out.json("report.json", &report)?;
    if failures.is_empty() {
        Ok(report)
    } else {
        Err(CliError::Check(failures.join("; ")))
    }
}

fn with_u(model: &ModelSpec, value: f64) -> ModelSpec {
    let mut m = model.clone();
    match &mut m {
        ModelSpec::Hubbard { u, .. } | ModelSpec::QuantumImpurity { u, .. } => *u = value,
        ModelSpec::Heisenberg { .. } => {}
    }
    m
}

fn fitted<T>(r: Result<T, entwave_core::FitError>) -> Fitted<T> {
    match r {
        Ok(v) => Fitted::Ok(v),
        Err(e) => Fitted::Skipped { skipped: e.to_string() },
    }
}

pub fn sweep(r: &Resolved) -> Result<Value, CliError> {
    let s = r.config.sweep.clone().ok_or_else(|| CliError::Config("sweep: section missing".into()))?;
    if r.config.run.scalar != ScalarKind::Real {
        return Err(CliError::Config("run.scalar: sweeps run with real amplitudes".into()));
    }
    let mut out = OutputDir::create(r)?;
    let mut points = Vec::new();
    let mut failures = Vec::new();
    let mut counters = Vec::new();
    let fits;
    let csv;

    match s.axis {
        SweepAxis::Ranks => {
            let pb = problem(r)?;
            let mut good: Vec<(f64, f64)> = Vec::new();
            let mut body = String::from("ranks,modeled_time,speedup,max_rank_flops,max_rank_sent,transposes,ratio\n");
            for &v in &s.values {
                let p = v as usize;
                let point = (|| -> Result<(Value, Value, f64), CliError> {
                    let layout = make_layout(pb.table.clone(), p)?;
                    let engine = HamiltonianEngine::new(pb.operator.clone(), Arc::clone(&layout))?;
                    let comm = comm_for(r, p);
                    let mut psi = BlockWavefunction::<f64>::random(&layout, r.config.run.seed, &comm);
                    psi.normalize(&comm)?;
                    comm.reset_counters();
                    engine.apply(&psi, &comm)?;
                    let c = comm.snapshot();
                    let cp = CostPoint::from_counters(layout.dimension() as f64, p, &c, &r.config.cost);
                    let row = json!({
                        "ranks": p,
                        "modeled_time": cp.modeled_time,
                        "max_rank_flops": c.rank_flops.iter().max(),
                        "max_rank_sent": c.rank_sent.iter().max(),
                        "transposes": transposes(&c),
                        "ratio": cp.ratio,
                    });
                    Ok((row, counters_json(&c), cp.modeled_time))
                })();
                match point {
                    Ok((row, c, t)) => {
                        good.push((p as f64, t));
                        points.push(row);
                        counters.push(json!({ "ranks": p, "matvec": c }));
                    }
                    Err(e) => failures.push(json!({ "value": v, "error": e.to_string() })),
                }
            }
            let t1 = good.first().map(|g| g.1).unwrap_or(f64::NAN);
            for (row, (_, t)) in points.iter_mut().zip(&good) {
                row["speedup"] = json!(t1 / t);
                use std::fmt::Write as _;
                writeln!(
                    body,
                    "{},{:e},{:e},{},{},{},{:e}",
                    row["ranks"], t, t1 / t, row["max_rank_flops"], row["max_rank_sent"], row["transposes"],
                    row["ratio"].as_f64().unwrap_or(f64::NAN)
                )
                .unwrap();
            }
            let ps: Vec<f64> = good.iter().map(|g| g.0).collect();
            let ts: Vec<f64> = good.iter().map(|g| g.1).collect();
            fits = json!({ "amdahl": fitted(fit_amdahl(&ps, &ts)), "speedup_power": fitted(fit_speedup_power(&ps, &ts)) });
            csv = body;
        }
        SweepAxis::ChiCutoff => {
            let pb = problem(r)?;
            let p_solve = r.config.run.ranks[0];
            let p_measure = *r.config.run.ranks.last().expect("validated");
            let layout = make_layout(pb.table.clone(), p_solve)?;
            let engine = HamiltonianEngine::new(pb.operator.clone(), Arc::clone(&layout))?;
            let comm = comm_for(r, p_solve);
            let gs = solve_on::<f64>(r, &engine, &comm)?;
            let state = gs.state.gather_vector(&comm)?;
            let measure = comm_for(r, p_measure);
            let mut cost_points = Vec::new();
            let mut body = String::from("chi_requested,chi,discarded_weight,energy,ratio,modeled_time,elements_padded,flops\n");
            for &v in &s.values {
                let point = (|| -> Result<(Value, CostPoint, Value), CliError> {
                    let work = reduce_workload(&pb.table, &pb.operator, &state, v as usize)?;
                    measure.reset_counters();
                    let (energy, c) = measure_reduced(&work, &measure)?;
                    let cp = CostPoint::from_counters(work.chi as f64, p_measure, &c, &r.config.cost);
                    let row = json!({
                        "chi_requested": v as usize,
                        "chi": work.chi,
                        "discarded_weight": work.discarded_weight,
                        "energy": energy,
                        "ratio": cp.ratio,
                        "modeled_time": cp.modeled_time,
                        "elements_padded": cp.elements_padded,
                        "flops": cp.flops,
                    });
                    Ok((row, cp, counters_json(&c)))
                })();
                match point {
                    Ok((row, cp, c)) => {
                        use std::fmt::Write as _;
                        writeln!(
                            body,
                            "{},{},{:e},{:e},{:e},{:e},{},{}",
                            v as usize, row["chi"], row["discarded_weight"].as_f64().unwrap_or(f64::NAN),
                            row["energy"].as_f64().unwrap_or(f64::NAN), cp.ratio, cp.modeled_time,
                            cp.elements_padded, cp.flops
                        )
                        .unwrap();
                        counters.push(json!({ "chi_requested": v as usize, "matvec": c }));
                        points.push(row);
                        cost_points.push(cp);
                    }
                    Err(e) => failures.push(json!({ "value": v, "error": e.to_string() })),
                }
            }
            // Requests beyond the full Schmidt rank repeat the last workload.
            cost_points.dedup_by(|b, a| b.chi <= a.chi);
            let cost = match cost_model_report(cost_points, r.config.analysis.m) {
                Ok(rep) => json!({ "ratio_fit": rep.ratio_fit, "m": rep.m, "fractal_dimension": rep.fractal_dimension }),
                Err(e) => json!({ "ratio_fit": { "skipped": e.to_string() } }),
            };
            fits = json!({ "ground_energy": gs.energy, "cost_model": cost });
            csv = body;
        }
        SweepAxis::U => {
            let mut body = String::from("u,energy,iterations,entropy,sectors,alpha,gamma,n_eff,q_star\n");
            let mut per_point = Vec::new();
            for &v in &s.values {
                let point = (|| -> Result<(Value, Value), CliError> {
                    let rv = r.with_model(with_u(&r.config.model, v))?;
                    let pb = problem(&rv)?;
                    let p = rv.config.run.ranks[0];
                    let layout = make_layout(pb.table.clone(), p)?;
                    let engine = HamiltonianEngine::new(pb.operator.clone(), Arc::clone(&layout))?;
                    let comm = comm_for(&rv, p);
                    let gs = solve_on::<f64>(&rv, &engine, &comm)?;
                    let rep = schmidt_decompose(&gs.state, &comm, rv.config.analysis.schmidt_cutoff)?;
                    let frag = fragmentation_report(&rep, &rv.config.analysis.fragmentation());
                    let row = json!({
                        "u": v,
                        "energy": gs.energy,
                        "iterations": gs.iterations,
                        "entropy": rep.entropy,
                        "sectors": frag.sectors,
                        "alpha": frag.exponential.ok().map(|e| e.alpha),
                        "gamma": frag.power_law.ok().map(|p| p.gamma),
                        "n_eff": frag.n_eff,
                        "q_star": frag.q_star,
                    });
                    Ok((row, json!({ "u": v, "fragmentation": frag })))
                })();
                match point {
                    Ok((row, f)) => {
                        use std::fmt::Write as _;
                        let num = |k: &str| row[k].as_f64().map(|x| format!("{x:e}")).unwrap_or_default();
                        writeln!(
                            body,
                            "{:e},{},{},{},{},{},{},{},{}",
                            v, num("energy"), row["iterations"], num("entropy"), row["sectors"], num("alpha"),
                            num("gamma"), num("n_eff"), num("q_star")
                        )
                        .unwrap();
                        points.push(row);
                        per_point.push(f);
                    }
                    Err(e) => failures.push(json!({ "value": v, "error": e.to_string() })),
                }
            }
            fits = json!({ "points": per_point });
            csv = body;
        }
    }

    let mut fits = fits;
    if points.len() < 2 {
        let notice = format!("{} usable point(s): cross-point fits skipped", points.len());
        eprintln!("notice: {notice}");
        fits["notice"] = json!(notice);
    }
    out.csv("sweep.csv", &csv)?;
    out.json("fits.json", &fits)?;
    out.json("counters.json", &json!({ "points": counters }))?;
    let report = json!({
        "command": "sweep",
        "axis": s.axis,
        "model": r.config.model,
        "cut": r.cut,
        "target": r.target,
        "points": points,
        "failures": failures,
        "fits": fits,
    });
    out.json("report.json", &report)?;
    if points.is_empty() {
        return Err(CliError::Check("every sweep point failed".into()));
    }
    Ok(report)
}

pub fn analyze(r: &Resolved) -> Result<Value, CliError> {
    let path = r
        .config
        .analyze
        .as_ref()
        .map(|a| a.state.clone())
        .ok_or_else(|| CliError::Config("analyze.state: missing".into()))?;
    let bytes = std::fs::read(&path)
        .map_err(|e| CliError::Config(format!("analyze.state: cannot read {}: {e}", path.display())))?;
    match entwave_core::state_io::decode_header(&bytes)?.0.kind {
        ScalarKind::Real => analyze_typed::<f64>(r, &bytes),
        ScalarKind::Complex => analyze_typed::<Complex64>(r, &bytes),
    }
}

fn analyze_typed<T: Scalar>(r: &Resolved, bytes: &[u8]) -> Result<Value, CliError> {
    let (header, psi) = decode_state::<T>(bytes)?;
    let expected = model_hash(&r.config.model, &r.cut);
    if header.model_hash != expected {
        return Err(CliError::Check(format!(
            "state was produced for a different model or cut (hash {} vs {})",
            hex(&header.model_hash),
            hex(&expected)
        )));
    }
    let pb = problem(r)?;
    if header.table != pb.table {
        return Err(CliError::Check("state sector table differs from the configured target".into()));
    }
    let mut out = OutputDir::create(r)?;
    let comm = comm_for(r, header.ranks);
    let engine = HamiltonianEngine::new(pb.operator, Arc::clone(psi.layout()))?;
    let h = engine.apply(&psi, &comm)?;
    let norm = psi.norm(&comm)?;
    let energy = psi.dot(&h, &comm)?.re() / (norm * norm);

    let mut report = header_json(r, &pb.table, "analyze");
    report.insert("source_run_hash".into(), json!(hex(&header.run_hash)));
    report.insert("ranks".into(), json!(header.ranks));
    report.insert("energy".into(), json!(energy));
    report.insert("norm".into(), json!(norm));
    report.insert("entanglement".into(), entanglement_outputs(r, &psi, &comm, &mut out)?);
    let report = Value::Object(report);
    out.json("report.json", &report)?;
    Ok(report)
}
