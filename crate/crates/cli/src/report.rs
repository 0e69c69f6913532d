//! Text and CSV renderings of analysis results.

use std::fmt::Write as _;
use std::path::Path;

use tailrisk::analysis::{Analysis, AnalysisOptions, ReserveSettings};
use tailrisk::composite::{fmt_sig, CompositeModel};
use tailrisk::distributions::Family;
use tailrisk::reserve::ReserveEstimate;
use tailrisk::tailselect::{Method, SortedSample};

use crate::Failure;

/// Aligned text for the terminal and CSV for `--out`.
pub struct Report {
    pub text: String,
    pub csv: String,
}

fn quote(s: &str) -> String {
    format!("\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\""))
}

/// One-line `key=value` record for stderr.
pub fn record(level: &str, f: &Failure) -> String {
    format!("{level} kind={} exit={} message={}", f.kind, f.code, quote(&f.message))
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Every failed item of an analysis, with the method (and family) in the message.
pub fn failures(a: &Analysis) -> Vec<Failure> {
    let mut out = Vec::new();
    for m in &a.methods {
        let mut push = |what: String, e: &tailrisk::Error| {
            let mut f = Failure::from(e.clone());
            f.message = format!("{what}: {}", f.message);
            out.push(f);
        };
        if let Err(e) = &m.threshold {
            push(m.method.to_string(), e);
        }
        if let Some(Err(e)) = &m.tail {
            push(format!("{} tail", m.method), e);
        }
        for b in &m.bulks {
            match (&b.fit, &b.model) {
                (Err(e), _) | (Ok(_), Err(e)) => push(format!("{} {}", m.method, b.family), e),
                _ => {}
            }
            if let (Ok(_), Some(Err(e))) = (&b.model, &b.reserves) {
                push(format!("{} {} reserve", m.method, b.family), e);
            }
        }
    }
    out
}

fn header(text: &mut String, command: &str, a: &Analysis, input: &Path) {
    writeln!(text, "# tailrisk {command}  input={}  n={}  digest={}", input.display(), a.n, a.digest).unwrap();
}

pub fn thresholds(a: &Analysis, input: &Path) -> Report {
    let mut text = String::new();
    header(&mut text, "select", a, input);
    writeln!(text, "{:<7}{:<16}{:>12}{:>8}{:>14}  note", "method", "rule", "k", "index", "b_hat").unwrap();
    let mut csv = String::from("digest,method,k,index,b_hat,warning,error\n");
    for m in &a.methods {
        match &m.threshold {
            Ok(t) => {
                let note = t.warning.clone().unwrap_or_default();
                writeln!(text, "{:<7}{:<16}{:>12.3}{:>8}{:>14.4}  {note}", m.method, m.method.describe(), t.k, t.index, t.b_hat)
                    .unwrap();
                writeln!(
                    csv,
                    "{},{},{},{},{},{},",
                    a.digest,
                    m.method,
                    fmt_sig(t.k),
                    t.index,
                    fmt_sig(t.b_hat),
                    csv_field(&note)
                )
                .unwrap();
            }
            Err(e) => {
                writeln!(text, "{:<7}{:<16}{:>12}{:>8}{:>14}  {e}", m.method, m.method.describe(), "-", "-", "-").unwrap();
                writeln!(csv, "{},{},,,,,{}", a.digest, m.method, csv_field(&e.to_string())).unwrap();
            }
        }
    }
    Report { text, csv }
}

const FIT_HEADER: &str =
    "digest,method,b_hat,bulk,param1,param2,bulk_loglik,converged,tail_alpha,tail_beta,n_exceed,tail_loglik,boundary,p_below,p_mode,error\n";

pub fn fits(a: &Analysis, input: &Path) -> Report {
    let mut text = String::new();
    header(&mut text, "fit", a, input);
    let mut csv = String::from(FIT_HEADER);
    for m in &a.methods {
        let t = match &m.threshold {
            Ok(t) => t,
            Err(e) => {
                writeln!(text, "\n{} ({}): {e}", m.method, m.method.describe()).unwrap();
                writeln!(csv, "{},{},,,,,,,,,,,,,,{}", a.digest, m.method, csv_field(&e.to_string())).unwrap();
                continue;
            }
        };
        writeln!(text, "\n{} ({})  b_hat = {:.4}  index {}", m.method, m.method.describe(), t.b_hat, t.index).unwrap();
        let (ta, tb, tn, tl, tbd) = match &m.tail {
            Some(Ok(tf)) => {
                writeln!(
                    text,
                    "  tail   Pareto alpha = {:.4}  beta = {:.4}  exceedances {}  loglik {:.4}{}",
                    tf.alpha,
                    tf.beta,
                    tf.n_exceed,
                    tf.loglik,
                    if tf.boundary { "  (beta at search boundary)" } else { "" }
                )
                .unwrap();
                (fmt_sig(tf.alpha), fmt_sig(tf.beta), tf.n_exceed.to_string(), fmt_sig(tf.loglik), tf.boundary.to_string())
            }
            Some(Err(e)) => {
                writeln!(text, "  tail   {e}").unwrap();
                Default::default()
            }
            None => Default::default(),
        };
        if let Some(s) = &m.scollnik {
            writeln!(text, "  joint  mu = {:.4}  sigma = {:.4}  r = {:.4}  converged {}", s.mu, s.sigma, s.r, s.converged)
                .unwrap();
        }
        for b in &m.bulks {
            match (&b.fit, &b.model) {
                (Ok(f), Ok(model)) => {
                    let [p1, p2] = f.spec.params();
                    writeln!(
                        text,
                        "  {:<10} ({:.4}, {:.4})  loglik {:.4}  p_below {:.4} ({})",
                        b.family.tag(),
                        p1,
                        p2,
                        f.loglik,
                        model.p_below(),
                        model.p_mode()
                    )
                    .unwrap();
                    writeln!(
                        csv,
                        "{},{},{},{},{},{},{},{},{ta},{tb},{tn},{tl},{tbd},{},{},",
                        a.digest,
                        m.method,
                        fmt_sig(t.b_hat),
                        b.family,
                        fmt_sig(p1),
                        fmt_sig(p2),
                        fmt_sig(f.loglik),
                        f.converged,
                        fmt_sig(model.p_below()),
                        model.p_mode()
                    )
                    .unwrap();
                }
                (Err(e), _) | (Ok(_), Err(e)) => {
                    writeln!(text, "  {:<10} {e}", b.family.tag()).unwrap();
                    writeln!(
                        csv,
                        "{},{},{},{},,,,,{ta},{tb},{tn},{tl},{tbd},,,{}",
                        a.digest,
                        m.method,
                        fmt_sig(t.b_hat),
                        b.family,
                        csv_field(&e.to_string())
                    )
                    .unwrap();
                }
            }
        }
    }
    Report { text, csv }
}

const RESERVE_HEADER: &str = "digest,method,bulk,b_hat,p_below,p_mode,lambda,eps,sims,seed,q_hat,model_digest\n";

fn reserve_settings_line(text: &mut String, s: &ReserveSettings) {
    writeln!(text, "# lambda={}  sims={}  seed={}", s.lambda, s.sims, s.seed).unwrap();
}

/// Reserve table: one row per (method, bulk), one column per `eps`. Values are
/// divided by `scale` for display (the CSV keeps the raw values).
pub fn reserves(a: &Analysis, opts: &AnalysisOptions, input: &Path, scale: f64, unit: &str) -> Report {
    let settings = opts.reserve.as_ref().expect("reserve settings");
    let mut text = String::new();
    header(&mut text, "reserve", a, input);
    reserve_settings_line(&mut text, settings);
    reserve_table(&mut text, a, settings, scale, unit);
    Report { text, csv: reserve_csv(a, settings) }
}

fn reserve_table(text: &mut String, a: &Analysis, settings: &ReserveSettings, scale: f64, unit: &str) {
    write!(text, "{:<8}{:<11}{:>12}{:>10}", "method", "bulk", "b_hat", "p_below").unwrap();
    for e in &settings.eps {
        write!(text, "{:>12}", format!("{}%", fmt_sig((1.0 - e) * 100.0))).unwrap();
    }
    if !unit.is_empty() {
        write!(text, "  ({unit})").unwrap();
    }
    text.push('\n');
    let digits = 2;
    for m in &a.methods {
        let Ok(t) = &m.threshold else {
            writeln!(text, "{:<8}{:<11}{:>12}", m.method, "-", "-").unwrap();
            continue;
        };
        for b in &m.bulks {
            let label = if m.method == Method::M7 { format!("{}*", b.family.tag()) } else { b.family.tag().to_string() };
            write!(text, "{:<8}{:<11}{:>12.4}", m.method, label, t.b_hat).unwrap();
            match (&b.model, &b.reserves) {
                (Ok(model), Some(Ok(r))) => {
                    write!(text, "{:>10.4}", model.p_below()).unwrap();
                    for est in r {
                        write!(text, "{:>12.digits$}", round_half_away(est.q_hat / scale, digits)).unwrap();
                    }
                }
                _ => {
                    write!(text, "{:>10}", "-").unwrap();
                    for _ in &settings.eps {
                        write!(text, "{:>12}", "-").unwrap();
                    }
                }
            }
            text.push('\n');
        }
    }
}

fn reserve_csv(a: &Analysis, s: &ReserveSettings) -> String {
    let mut csv = String::from(RESERVE_HEADER);
    for m in &a.methods {
        let Ok(t) = &m.threshold else { continue };
        for b in &m.bulks {
            if let (Ok(model), Some(Ok(r))) = (&b.model, &b.reserves) {
                for est in r {
                    writeln!(
                        csv,
                        "{},{},{},{},{},{},{},{},{},{},{},{}",
                        a.digest,
                        m.method,
                        b.family,
                        fmt_sig(t.b_hat),
                        fmt_sig(model.p_below()),
                        model.p_mode(),
                        s.lambda,
                        est.query.eps,
                        s.sims,
                        s.seed,
                        fmt_sig(est.q_hat),
                        est.model_digest
                    )
                    .unwrap();
                }
            }
        }
    }
    csv
}

/// `x` rounded to `digits` decimals, halves away from zero.
pub fn round_half_away(x: f64, digits: usize) -> f64 {
    let f = 10f64.powi(digits as i32);
    // the shortest decimal representation decides ties, not the binary value
    let scaled: f64 = format!("{}", x * f).parse().unwrap_or(x * f);
    scaled.round() / f
}

pub fn model_reserves(model: &CompositeModel, est: &[ReserveEstimate], s: &ReserveSettings, path: &Path) -> Report {
    let digest = model.digest();
    let mut text = String::new();
    writeln!(text, "# tailrisk reserve  model={}  digest={digest}", path.display()).unwrap();
    reserve_settings_line(&mut text, s);
    writeln!(
        text,
        "bulk {} ({}, {})  tail Pareto ({}, {})  b = {}  p_below = {} ({})",
        model.bulk().family().tag(),
        fmt_sig(model.bulk().param1()),
        fmt_sig(model.bulk().param2()),
        fmt_sig(model.tail().param1()),
        fmt_sig(model.tail().param2()),
        fmt_sig(model.threshold()),
        fmt_sig(model.p_below()),
        model.p_mode()
    )
    .unwrap();
    writeln!(text, "{:>10}{:>10}{:>16}", "eps", "index", "q_hat").unwrap();
    let mut csv = String::from(RESERVE_HEADER);
    for e in est {
        writeln!(text, "{:>10}{:>10}{:>16.2}", e.query.eps, e.index, round_half_away(e.q_hat, 2)).unwrap();
        writeln!(
            csv,
            "{digest},,{},{},{},{},{},{},{},{},{},{}",
            model.bulk().family(),
            fmt_sig(model.threshold()),
            fmt_sig(model.p_below()),
            model.p_mode(),
            s.lambda,
            e.query.eps,
            s.sims,
            s.seed,
            fmt_sig(e.q_hat),
            e.model_digest
        )
        .unwrap();
    }
    Report { text, csv }
}

/// The three Danish tables: thresholds, parameter estimates and reserves in billions.
pub fn danish(a: &Analysis, opts: &AnalysisOptions, sample: &SortedSample, input: &Path) -> Report {
    let settings = opts.reserve.as_ref().expect("reserve settings");
    let v = sample.values();
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let sd = (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let mut text = String::new();
    header(&mut text, "danish", a, input);
    writeln!(text, "# claims in millions: min {:.2}  max {:.2}  mean {:.2}  sd {:.2}", v[0], v[v.len() - 1], mean, sd).unwrap();
    reserve_settings_line(&mut text, settings);

    text.push_str("\nThresholds\n");
    for m in &a.methods {
        match &m.threshold {
            Ok(t) => {
                writeln!(text, "  {}  {:<16}{:>10.2}  (index {}, k {:.2})", m.method, m.method.describe(), t.b_hat, t.index, t.k)
                    .unwrap()
            }
            Err(e) => writeln!(text, "  {}  {:<16}{:>10}  {e}", m.method, m.method.describe(), "-").unwrap(),
        }
    }

    text.push_str(
        "\nParameter estimates (gamma: shape, scale; lognormal: mu, sigma; weibull: shape, scale; loggamma: shape, rate)\n",
    );
    write!(text, "  {:<6}{:>8}  {:>16}", "thres.", "b_hat", "Pareto").unwrap();
    let families: Vec<Family> = opts.families.clone();
    for f in &families {
        write!(text, "  {:>16}", f.tag()).unwrap();
    }
    writeln!(text, "  {:>16}", "lognormal*").unwrap();
    for m in &a.methods {
        let Ok(t) = &m.threshold else { continue };
        write!(text, "  {:<6}{:>8.2}", m.method, t.b_hat).unwrap();
        let pair = |x: f64, y: f64| format!("{x:.2}, {y:.2}");
        match &m.tail {
            Some(Ok(tf)) => write!(text, "  {:>16}", pair(tf.alpha, tf.beta)).unwrap(),
            _ => write!(text, "  {:>16}", "-").unwrap(),
        }
        let is_m7 = m.method == Method::M7;
        for f in &families {
            let cell = if is_m7 {
                "-".to_string()
            } else {
                m.bulks
                    .iter()
                    .find(|b| b.family == *f)
                    .and_then(|b| b.fit.as_ref().ok())
                    .map(|fit| pair(fit.spec.param1(), fit.spec.param2()))
                    .unwrap_or_else(|| "-".into())
            };
            write!(text, "  {cell:>16}").unwrap();
        }
        let joint = if is_m7 { m.scollnik.map(|s| pair(s.mu, s.sigma)).unwrap_or_else(|| "-".into()) } else { "-".into() };
        writeln!(text, "  {joint:>16}").unwrap();
    }

    text.push_str("\nReserves (billions of DKK)\n");
    reserve_table(&mut text, a, settings, 1000.0, "billions");

    let mut csv = fits(a, input).csv;
    csv.push('\n');
    csv.push_str(&reserve_csv(a, settings));
    Report { text, csv }
}
