use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context, Result};
use clap::{CommandFactory, Parser, Subcommand};
use mpc_query::analysis::{analyze, report};
use mpc_query::clear::{oracle_execute, write_table};
use mpc_query::ir::{build_dag, parse_document, OpKind, QueryDag};
use mpc_query::orchestrator::ledger::Ledger;
use mpc_query::orchestrator::{audit, load_inputs, run, verify, VerifyOptions};
use mpc_query::plan::{emit_plans, estimate_cost, partition};
use mpc_query::rewrite::{compile, CompileOptions};
use serde_json::json;

#[derive(Parser)]
#[command(name = "mpcq", about = "Compile and run relational queries over multiple parties' private data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct CompileFlags {
    /// Only apply the transformations needed to execute the query.
    #[arg(long)]
    no_rewrites: bool,
    /// Override consent, e.g. `--consent=pA:true,pB:false`.
    #[arg(long)]
    consent: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Print ownership, trust and MPC marking of every node.
    Analyze { query: PathBuf },
    /// Print the compiled DAG and the rewrite trace.
    Compile {
        query: PathBuf,
        #[command(flatten)]
        flags: CompileFlags,
    },
    /// Run the query on the inputs in a directory and write every artifact of
    /// the run to `--out`.
    Simulate {
        query: PathBuf,
        #[arg(long)]
        inputs: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        flags: CompileFlags,
    },
    /// Compare runs with and without rewrites against the cleartext oracle on
    /// randomized inputs (and on `--inputs`, if given).
    Verify {
        query: PathBuf,
        #[arg(long)]
        inputs: Option<PathBuf>,
        #[arg(long, default_value_t = 50)]
        trials: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 100)]
        max_rows: usize,
        #[arg(long, default_value_t = 1000)]
        large_rows: usize,
        #[arg(long)]
        consent: Option<String>,
    },
    /// Check the leakage ledger of a simulate run directory.
    Audit { run_dir: PathBuf },
}

fn load_query(path: &Path, consent: Option<&str>) -> Result<QueryDag> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut dag = build_dag(&parse_document(&text)?)?;
    if let Some(spec) = consent {
        for item in spec.split(',').filter(|s| !s.is_empty()) {
            let (party, value) = item.split_once(':').ok_or_else(|| anyhow!("consent entry `{item}` is not party:bool"))?;
            let id = dag.party_by_name(party).ok_or_else(|| anyhow!("unknown party `{party}` in --consent"))?;
            let value: bool = value.parse().with_context(|| format!("consent value for {party}"))?;
            dag.consent.insert(id, value);
        }
    }
    Ok(dag)
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)?).with_context(|| format!("writing {}", path.display()))
}

fn simulate(query: &Path, inputs: &Path, seed: u64, out: &Path, flags: &CompileFlags) -> Result<bool> {
    let dag = load_query(query, flags.consent.as_deref())?;
    let compiled = compile(&dag, CompileOptions { rewrites: !flags.no_rewrites })?;
    let plan = partition(&compiled.dag)?;
    let tables = load_inputs(&compiled.dag, inputs)?;
    let result = run(&compiled.dag, &tables, seed)?;

    fs::create_dir_all(out.join("plans"))?;
    fs::create_dir_all(out.join("transcripts"))?;
    write_json(&out.join("compiled.json"), &compiled.dag)?;
    write_json(&out.join("trace.json"), &compiled.trace)?;
    for (party, p) in emit_plans(&compiled.dag, &plan) {
        write_json(&out.join("plans").join(format!("{party}.json")), &p)?;
    }
    for p in compiled.dag.party_ids() {
        let name = compiled.dag.party_name(p);
        write_json(&out.join("transcripts").join(format!("{name}.json")), &result.transcript_of(p))?;
    }
    for n in compiled.dag.outputs() {
        let OpKind::Output { to } = &n.kind else { continue };
        for r in to {
            let dir = out.join("outputs").join(compiled.dag.party_name(*r));
            fs::create_dir_all(&dir)?;
            write_table(&result.outputs[&n.name], &dir.join(format!("{}.csv", n.name)))?;
        }
    }
    write_json(&out.join("ledger.json"), &result.ledger)?;
    let estimate = estimate_cost(&compiled.dag, &result.rows);
    write_json(
        &out.join("counters.json"),
        &json!({ "total": result.counters, "per_node": result.per_node, "estimate": estimate, "rows": result.rows }),
    )?;
    let violations = audit(&compiled.dag, &result.ledger);
    write_json(&out.join("audit.json"), &json!({ "pass": violations.is_empty(), "violations": violations }))?;
    println!("{}", json!({ "outputs": result.outputs.keys().collect::<Vec<_>>(), "counters": result.counters, "audit_pass": violations.is_empty() }));
    Ok(violations.is_empty())
}

fn audit_dir(dir: &Path) -> Result<bool> {
    let dag = QueryDag::from_json(&fs::read_to_string(dir.join("compiled.json")).context("reading compiled.json")?)?;
    let ledger: Ledger = serde_json::from_str(&fs::read_to_string(dir.join("ledger.json")).context("reading ledger.json")?)?;
    let violations = audit(&dag, &ledger);
    let pass = violations.is_empty();
    let report = json!({ "pass": pass, "violations": violations });
    write_json(&dir.join("audit.json"), &report)?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(pass)
}

fn verify_cmd(query: &Path, inputs: Option<&Path>, opts: VerifyOptions, consent: Option<&str>) -> Result<bool> {
    let dag = load_query(query, consent)?;
    let mut ok = true;
    if let Some(dir) = inputs {
        let tables = load_inputs(&dag, dir)?;
        let want = oracle_execute(&dag, &tables)?;
        for rewrites in [true, false] {
            let compiled = compile(&dag, CompileOptions { rewrites })?;
            let got = run(&compiled.dag, &tables, opts.seed)?;
            for (name, table) in &want {
                if !got.outputs.get(name).is_some_and(|t| t.same_multiset(table)) {
                    println!("{}", json!({ "inputs": dir, "rewrites": rewrites, "mismatch": name }));
                    ok = false;
                }
            }
        }
    }
    let report = verify(&dag, opts)?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(ok && report.failures() == 0)
}

fn execute(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Analyze { query } => {
            let dag = analyze(&load_query(&query, None)?);
            println!("{}", serde_json::to_string_pretty(&report(&dag))?);
            Ok(true)
        }
        Command::Compile { query, flags } => {
            let dag = load_query(&query, flags.consent.as_deref())?;
            let compiled = compile(&dag, CompileOptions { rewrites: !flags.no_rewrites })?;
            println!("{}", serde_json::to_string_pretty(&json!({ "compiled": compiled.dag, "trace": compiled.trace }))?);
            Ok(true)
        }
        Command::Simulate { query, inputs, seed, out, flags } => simulate(&query, &inputs, seed, &out, &flags),
        Command::Verify { query, inputs, trials, seed, max_rows, large_rows, consent } => {
            if trials == 0 && inputs.is_none() {
                Cli::command()
                    .error(clap::error::ErrorKind::MissingRequiredArgument, "nothing to verify: give --inputs or a positive --trials")
                    .exit();
            }
            verify_cmd(&query, inputs.as_deref(), VerifyOptions { trials, seed, max_rows, large_rows }, consent.as_deref())
        }
        Command::Audit { run_dir } => audit_dir(&run_dir),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
