//! `dalat`: run job scripts, single optics commands, or the pipe server.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use dalat::latparse::Session;
use dalat::mtable::MTable;
use dalat::Error;

#[derive(Parser)]
#[command(name = "dalat", version, about = "Differential-algebra lattice optics")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Execute a job script.
    Run {
        job: PathBuf,
    },
    /// Global positions and orientations of the elements.
    Survey(Common),
    /// Track one particle through the sequence.
    Track {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 1)]
        turns: usize,
        /// Initial coordinates as `x=1e-3,py=2e-4`.
        #[arg(long)]
        init: Option<String>,
    },
    /// Optical functions; order 2 or more adds the chromaticities.
    Twiss(Common),
    /// Closed orbit search.
    Cofind(Common),
    /// Fit variables so that target expressions vanish.
    Match {
        #[command(flatten)]
        common: Common,
        /// Variable to vary (repeatable).
        #[arg(long = "vary", required = true)]
        vary: Vec<String>,
        /// Expression driven to zero, e.g. `twiss.q1-5.31` (repeatable).
        #[arg(long = "target", required = true)]
        target: Vec<String>,
        /// Command evaluated at each step.
        #[arg(long, default_value = "twiss")]
        command: String,
        /// Use the knob derivatives of the map instead of finite differences.
        #[arg(long)]
        jacobian: bool,
    },
    /// Serve the pipe protocol.
    Serve {
        #[arg(long, required = true)]
        stdio: bool,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Tfs,
    Csv,
}

#[derive(Args)]
struct Common {
    /// Script(s) defining the lattice, executed in order.
    #[arg(long = "seq", required = true)]
    seq: Vec<PathBuf>,
    /// Sequence to use when the scripts define several.
    #[arg(long)]
    sequence: Option<String>,
    /// Keep only the rows `A/B` of the result.
    #[arg(long)]
    range: Option<String>,
    #[arg(long)]
    order: Option<u8>,
    /// Output file; standard output otherwise.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
    /// Comma-separated columns written as CSV plot data.
    #[arg(long)]
    plot: Option<String>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_parse() { 2 } else { 1 })
        }
    }
}

fn session() -> Session {
    let mut s = Session::new();
    s.base = std::env::current_dir().unwrap_or_default();
    s
}

fn dispatch(cmd: Cmd) -> Result<(), Error> {
    match cmd {
        Cmd::Run { job } => {
            let mut s = session();
            let r = s.exec_file(&job);
            print_messages(&s, &mut std::io::stdout())?;
            r
        }
        Cmd::Serve { .. } => {
            let mut s = session();
            dalat::protocol::serve(&mut s, std::io::stdin().lock(), std::io::stdout().lock())
        }
        Cmd::Survey(c) => single(&c, "survey", String::new()),
        Cmd::Twiss(c) => {
            let extra = c.order.map(|o| format!(", order={o}")).unwrap_or_default();
            single(&c, "twiss", extra)
        }
        Cmd::Cofind(c) => single(&c, "cofind", String::new()),
        Cmd::Track { common, turns, init } => {
            let mut extra = format!(", turns={turns}");
            if let Some(init) = init {
                for kv in init.split(',').filter(|s| !s.trim().is_empty()) {
                    let (k, v) = kv
                        .split_once('=')
                        .ok_or_else(|| Error::Eval(format!("--init: expected name=value, found '{kv}'")))?;
                    extra.push_str(&format!(", {}={}", k.trim(), v.trim()));
                }
            }
            single(&common, "track", extra)
        }
        Cmd::Match {
            common,
            vary,
            target,
            command,
            jacobian,
        } => {
            let mut s = load(&common)?;
            let mut job = format!("match, command={command}{}", seq_arg(&common));
            if let Some(o) = common.order {
                job.push_str(&format!(", order={o}"));
            }
            if jacobian {
                job.push_str(", jacobian=true");
            }
            job.push_str(";\n");
            for v in &vary {
                job.push_str(&format!("vary, name={v};\n"));
            }
            for (i, t) in target.iter().enumerate() {
                job.push_str(&format!("equality, name=t{}, expr:={t};\n", i + 1));
            }
            job.push_str("endmatch;\n");
            let r = s.exec_str(&job);
            print_messages(&s, &mut std::io::stderr())?;
            r?;
            emit(&common, s.table("match")?)
        }
    }
}

fn print_messages(s: &Session, out: &mut impl Write) -> Result<(), Error> {
    for m in &s.messages {
        writeln!(out, "{m}")?;
    }
    Ok(())
}

fn seq_arg(c: &Common) -> String {
    c.sequence.as_ref().map(|n| format!(", sequence={n}")).unwrap_or_default()
}

fn load(c: &Common) -> Result<Session, Error> {
    let mut s = session();
    for f in &c.seq {
        s.exec_file(f)?;
    }
    Ok(s)
}

fn single(c: &Common, cmd: &str, extra: String) -> Result<(), Error> {
    let mut s = load(c)?;
    s.exec_str(&format!("{cmd}{}{extra};", seq_arg(c)))?;
    print_messages(&s, &mut std::io::stderr())?;
    emit(c, s.table(cmd)?)
}

fn emit(c: &Common, t: &MTable) -> Result<(), Error> {
    let t = match &c.range {
        Some(r) => t.select_range(r)?,
        None => t.materialize()?,
    };
    let text = if let Some(cols) = &c.plot {
        let cols: Vec<&str> = cols.split(',').map(str::trim).filter(|s| !s.is_empty()).collect();
        t.to_csv(&cols)?
    } else {
        match format_for(c.format, c.out.as_deref()) {
            Format::Tfs => t.to_tfs()?,
            Format::Csv => t.to_csv(&[])?,
        }
    };
    match &c.out {
        Some(p) => std::fs::write(p, text)?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn format_for(f: Option<Format>, out: Option<&Path>) -> Format {
    f.unwrap_or(match out.and_then(|p| p.extension()) {
        Some(e) if e == "csv" => Format::Csv,
        _ => Format::Tfs,
    })
}
