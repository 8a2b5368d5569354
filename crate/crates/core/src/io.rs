//! Reading the run description and data files, writing the report files,
//! and the end-to-end run used by the command-line tool.
//!
//! Input files are whitespace separated. Lines whose first token is not a
//! number are labels and are skipped, so the descriptive lines of the input
//! file may be edited freely.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::bayes_factor::{self, BayesFactorReport, EvaluationConfig};
use crate::error::{Error, Result};
use crate::hypothesis::{parse_constraint_line, ConstraintKind, Hypothesis, HypothesisSet};
use crate::mcmc::{self, ChainConfig, PosteriorChain};
use crate::model::{Dataset, GroupData, ModelSpec, RhoLayout};
use crate::prior;

pub const INPUT_FILE: &str = "BCT_input.txt";
pub const DATA_FILE: &str = "data.txt";
pub const OUTPUT_FILE: &str = "BCT_output.txt";
pub const REL_COMP_FILE: &str = "BCT_output_relComp.txt";
pub const REL_FIT_FILE: &str = "BCT_output_relFit.txt";
pub const ESTIMATES_FILE: &str = "BCT_estimates.txt";

/// Everything the input file specifies.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub outcomes: usize,
    /// Covariates in the data file, not counting the intercept.
    pub covariates: usize,
    pub intercept: bool,
    pub populations: usize,
    pub n_total: usize,
    pub header: bool,
    /// One flag per outcome; continuous outcomes come first.
    pub ordinal: Vec<bool>,
    /// `(equalities, inequalities)` per hypothesis.
    pub constraint_counts: Vec<(usize, usize)>,
    pub hypotheses: Vec<Hypothesis>,
    pub seed: u64,
    pub prior_draws: usize,
    pub posterior_draws: usize,
    pub draws_per_constraint: usize,
}

impl RunConfig {
    pub fn layout(&self) -> RhoLayout {
        RhoLayout::new(self.outcomes, self.populations).expect("validated while parsing")
    }

    pub fn continuous(&self) -> usize {
        self.ordinal.iter().filter(|o| !**o).count()
    }

    /// Columns of the design matrix, intercept included.
    pub fn regressors(&self) -> usize {
        self.covariates + usize::from(self.intercept)
    }

    pub fn hypothesis_set(&self) -> Option<HypothesisSet> {
        HypothesisSet::new(self.hypotheses.clone()).ok()
    }

    /// Renders the configuration in the input-file layout.
    pub fn to_input_text(&self) -> String {
        let flag = |b: bool| if b { "1" } else { "0" };
        let mut out = String::new();
        out.push_str("Input 1: model & data\n");
        out.push_str("#DV, #covs, intercept, #populations, Ntotal, header\n");
        out.push_str(&format!(
            "{} {} {} {} {} {}\n\n",
            self.outcomes,
            self.covariates,
            flag(self.intercept),
            self.populations,
            self.n_total,
            flag(self.header)
        ));
        out.push_str("Which DVs are ordinal (0=continuous, 1=ordinal)\n");
        let flags: Vec<&str> = self.ordinal.iter().map(|&o| flag(o)).collect();
        out.push_str(&flags.join(" "));
        out.push_str("\n\nInput 2: hypotheses\n#hypotheses\n");
        out.push_str(&format!("{}\n\n", self.hypotheses.len()));
        out.push_str("#equalities, #inequalities per hypothesis\n");
        for (e, i) in &self.constraint_counts {
            out.push_str(&format!("{e} {i}\n"));
        }
        out.push_str("\nInput 3: constraints in hypotheses\n");
        out.push_str("Equalities H1; Inequalities H1; Equalities H2; Inequalities H2; etc.\n");
        for (k, h) in self.hypotheses.iter().enumerate() {
            if k > 0 {
                out.push('\n');
            }
            for line in h.to_constraint_lines() {
                out.push_str(&line);
                out.push('\n');
            }
        }
        out.push_str("\nInput 4: implementation details\n");
        out.push_str("seed, #draws prior, #draws posterior, #draws per constraint\n");
        out.push_str(&format!(
            "{} {} {} {}\n",
            self.seed, self.prior_draws, self.posterior_draws, self.draws_per_constraint
        ));
        out
    }
}

struct NumericLine<'a> {
    line: usize,
    tokens: Vec<&'a str>,
}

fn numeric_lines<'a>(text: &'a str, file: &str) -> Result<Vec<NumericLine<'a>>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let tokens: Vec<&str> = raw.split_whitespace().collect();
        let Some(first) = tokens.first() else { continue };
        if first.parse::<f64>().is_err() {
            continue;
        }
        if let Some(bad) = tokens.iter().find(|t| t.parse::<f64>().is_err()) {
            return Err(Error::parse(file, i + 1, format!("unknown token '{bad}'")));
        }
        out.push(NumericLine { line: i + 1, tokens });
    }
    Ok(out)
}

fn int_token(token: &str, file: &str, line: usize, what: &str) -> Result<usize> {
    token
        .parse::<usize>()
        .map_err(|_| Error::parse(file, line, format!("{what} must be a non-negative integer, found '{token}'")))
}

fn flag_token(token: &str, file: &str, line: usize, what: &str) -> Result<bool> {
    match token {
        "0" => Ok(false),
        "1" => Ok(true),
        _ => Err(Error::parse(file, line, format!("{what} must be 0 or 1, found '{token}'"))),
    }
}

/// Parses the input file (`BCT_input.txt` layout).
pub fn parse_input_file(text: &str) -> Result<RunConfig> {
    parse_input_named(text, INPUT_FILE)
}

pub fn parse_input_named(text: &str, file: &str) -> Result<RunConfig> {
    let lines = numeric_lines(text, file)?;
    let end_line = text.lines().count() + 1;
    let mut cursor = lines.iter();
    let mut next = |section: &str| {
        cursor
            .next()
            .ok_or_else(|| Error::parse(file, end_line, format!("input ends before the {section}")))
    };
    let expect_len = |l: &NumericLine, n: usize, what: &str| -> Result<()> {
        if l.tokens.len() != n {
            return Err(Error::parse(
                file,
                l.line,
                format!("{what} needs {n} values, found {}", l.tokens.len()),
            ));
        }
        Ok(())
    };

    let model = next("model line")?;
    expect_len(model, 6, "the model line (#DV, #covs, intercept, #populations, Ntotal, header)")?;
    let outcomes = int_token(model.tokens[0], file, model.line, "#DV")?;
    let covariates = int_token(model.tokens[1], file, model.line, "#covs")?;
    let intercept = flag_token(model.tokens[2], file, model.line, "intercept")?;
    let populations = int_token(model.tokens[3], file, model.line, "#populations")?;
    let n_total = int_token(model.tokens[4], file, model.line, "Ntotal")?;
    let header = flag_token(model.tokens[5], file, model.line, "header")?;
    if outcomes < 2 {
        return Err(Error::parse(file, model.line, "at least 2 dependent variables are needed"));
    }
    if populations < 1 || n_total < 1 {
        return Err(Error::parse(file, model.line, "#populations and Ntotal must be positive"));
    }
    if covariates + usize::from(intercept) == 0 {
        return Err(Error::parse(file, model.line, "the model needs an intercept or at least one covariate"));
    }
    let layout = RhoLayout::new(outcomes, populations).map_err(|e| Error::parse(file, model.line, e.to_string()))?;

    let levels = next("measurement level line")?;
    expect_len(levels, outcomes, "the measurement level line")?;
    let ordinal = levels
        .tokens
        .iter()
        .map(|t| flag_token(t, file, levels.line, "a measurement level"))
        .collect::<Result<Vec<_>>>()?;
    if ordinal.windows(2).any(|w| w[0] && !w[1]) {
        return Err(Error::parse(
            file,
            levels.line,
            "continuous dependent variables must come before the ordinal ones",
        ));
    }

    let count_line = next("number of hypotheses")?;
    expect_len(count_line, 1, "#hypotheses")?;
    let n_hyp = int_token(count_line.tokens[0], file, count_line.line, "#hypotheses")?;
    let mut constraint_counts = Vec::with_capacity(n_hyp);
    for _ in 0..n_hyp {
        let l = next("constraint counts")?;
        expect_len(l, 2, "a constraint count line (#equalities, #inequalities)")?;
        let e = int_token(l.tokens[0], file, l.line, "#equalities")?;
        let i = int_token(l.tokens[1], file, l.line, "#inequalities")?;
        if e + i == 0 {
            return Err(Error::parse(file, l.line, "a hypothesis needs at least one constraint"));
        }
        constraint_counts.push((e, i));
    }
    let mut hypotheses = Vec::with_capacity(n_hyp);
    for (t, &(n_eq, n_ineq)) in constraint_counts.iter().enumerate() {
        let mut rows = Vec::with_capacity(n_eq + n_ineq);
        let mut first_line = end_line;
        for k in 0..n_eq + n_ineq {
            let l = next(&format!("constraints of hypothesis {}", t + 1))?;
            if k == 0 {
                first_line = l.line;
            }
            let kind = if k < n_eq {
                ConstraintKind::Equality
            } else {
                ConstraintKind::Inequality
            };
            let row = parse_constraint_line(&l.tokens, kind, &layout)
                .map_err(|e| Error::parse(file, l.line, e.to_string()))?;
            rows.push(row);
        }
        let h = Hypothesis::compile(format!("H{}", t + 1), rows, layout).map_err(|e| match e {
            Error::RankDeficient { row, .. } => Error::parse(
                file,
                first_line + row - 1,
                format!("equality constraint {row} of hypothesis {} is redundant or contradicts earlier rows", t + 1),
            ),
            other => Error::parse(file, first_line, format!("hypothesis {}: {other}", t + 1)),
        })?;
        hypotheses.push(h);
    }

    let imp = next("implementation details (seed, #draws prior, #draws posterior, #draws per constraint)")?;
    expect_len(imp, 4, "the implementation line")?;
    let seed = imp.tokens[0]
        .parse::<u64>()
        .map_err(|_| Error::parse(file, imp.line, format!("seed must be a non-negative integer, found '{}'", imp.tokens[0])))?;
    let prior_draws = int_token(imp.tokens[1], file, imp.line, "#draws prior")?;
    let posterior_draws = int_token(imp.tokens[2], file, imp.line, "#draws posterior")?;
    let draws_per_constraint = int_token(imp.tokens[3], file, imp.line, "#draws per constraint")?;
    if prior_draws == 0 || posterior_draws == 0 || draws_per_constraint == 0 {
        return Err(Error::parse(file, imp.line, "draw counts must be positive"));
    }
    if let Some(extra) = cursor.next() {
        return Err(Error::parse(
            file,
            extra.line,
            "unexpected numbers after the implementation details (do the constraint counts match the constraint lines?)",
        ));
    }
    Ok(RunConfig {
        outcomes,
        covariates,
        intercept,
        populations,
        n_total,
        header,
        ordinal,
        constraint_counts,
        hypotheses,
        seed,
        prior_draws,
        posterior_draws,
        draws_per_constraint,
    })
}

#[derive(Clone)]
struct DataRow {
    continuous: Vec<f64>,
    ordinal: Vec<usize>,
    covariates: Vec<f64>,
}

/// Parses the data file: continuous outcomes, ordinal outcomes, covariates
/// and (optional when there is one population) the population label.
/// An intercept column is appended after the covariates when requested.
pub fn parse_data_file(text: &str, config: &RunConfig) -> Result<Dataset> {
    parse_data_named(text, config, DATA_FILE)
}

pub fn parse_data_named(text: &str, config: &RunConfig, file: &str) -> Result<Dataset> {
    let p = config.outcomes;
    let p1 = config.continuous();
    let base = p + config.covariates;
    let label_optional = config.populations == 1;
    let mut skipped_header = !config.header;
    let mut rows: Vec<Vec<DataRow>> = vec![Vec::new(); config.populations];
    let mut total = 0usize;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let tokens: Vec<&str> = raw.split_whitespace().collect();
        if tokens.is_empty() {
            continue;
        }
        if !skipped_header {
            skipped_header = true;
            continue;
        }
        let ok_width = tokens.len() == base + 1 || (label_optional && tokens.len() == base);
        if !ok_width {
            let expected = if label_optional {
                format!("{base} or {}", base + 1)
            } else {
                format!("{}", base + 1)
            };
            return Err(Error::parse(
                file,
                line,
                format!("expected {expected} columns, found {}", tokens.len()),
            ));
        }
        let values = tokens
            .iter()
            .map(|t| {
                t.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Error::parse(file, line, format!("'{t}' is not a number")))
            })
            .collect::<Result<Vec<f64>>>()?;
        let mut ordinal = Vec::with_capacity(p - p1);
        for (k, &v) in values[p1..p].iter().enumerate() {
            if v.fract() != 0.0 {
                return Err(Error::parse(
                    file,
                    line,
                    format!("ordinal variable {} has non-integer value {v}", p1 + k + 1),
                ));
            }
            if v < 1.0 {
                return Err(Error::parse(
                    file,
                    line,
                    format!("ordinal variable {} has category {v}; the lowest category is 1", p1 + k + 1),
                ));
            }
            ordinal.push(v as usize);
        }
        let g = if values.len() == base + 1 {
            let label = values[base];
            if label.fract() != 0.0 || label < 1.0 || label > config.populations as f64 {
                return Err(Error::parse(
                    file,
                    line,
                    format!("unknown population label {label} (expected 1..={})", config.populations),
                ));
            }
            label as usize
        } else {
            1
        };
        rows[g - 1].push(DataRow {
            continuous: values[..p1].to_vec(),
            ordinal,
            covariates: values[p..base].to_vec(),
        });
        total += 1;
    }
    if total != config.n_total {
        return Err(Error::InvalidData {
            file: file.to_string(),
            msg: format!("{total} data rows, but Ntotal in the input file is {}", config.n_total),
        });
    }
    let q = config.regressors();
    let mut groups = Vec::with_capacity(config.populations);
    for (g, group_rows) in rows.iter().enumerate() {
        if group_rows.is_empty() {
            return Err(Error::InvalidData {
                file: file.to_string(),
                msg: format!("population {} has no observations", g + 1),
            });
        }
        let n = group_rows.len();
        let continuous = DMatrix::from_fn(n, p1, |i, j| group_rows[i].continuous[j]);
        let ordinal = (0..p - p1).map(|k| group_rows.iter().map(|r| r.ordinal[k]).collect()).collect();
        let covariates = DMatrix::from_fn(n, q, |i, j| {
            if j < config.covariates {
                group_rows[i].covariates[j]
            } else {
                1.0
            }
        });
        groups.push(GroupData {
            continuous,
            ordinal,
            covariates,
        });
    }
    Dataset::new(groups).map_err(|e| Error::InvalidData {
        file: file.to_string(),
        msg: e.to_string(),
    })
}

/// Lower bound, median and upper bound of central 95% intervals.
#[derive(Clone, Debug, PartialEq)]
pub struct Summary {
    pub lower: DMatrix<f64>,
    pub median: DMatrix<f64>,
    pub upper: DMatrix<f64>,
}

impl Summary {
    fn from_draws(rows: usize, cols: usize, draws: &[DMatrix<f64>]) -> Summary {
        let mut lower = DMatrix::zeros(rows, cols);
        let mut median = DMatrix::zeros(rows, cols);
        let mut upper = DMatrix::zeros(rows, cols);
        let mut buf = Vec::with_capacity(draws.len());
        for i in 0..rows {
            for j in 0..cols {
                buf.clear();
                buf.extend(draws.iter().map(|d| d[(i, j)]));
                buf.sort_by(f64::total_cmp);
                lower[(i, j)] = quantile(&buf, 0.025);
                median[(i, j)] = quantile(&buf, 0.5);
                upper[(i, j)] = quantile(&buf, 0.975);
            }
        }
        Summary { lower, median, upper }
    }

    pub fn is_ordered(&self) -> bool {
        self.lower.iter().zip(self.median.iter()).all(|(a, b)| a <= b)
            && self.median.iter().zip(self.upper.iter()).all(|(a, b)| a <= b)
    }
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile(sorted: &[f64], prob: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * prob;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Clone, Debug, PartialEq)]
pub struct PopulationEstimates {
    /// `P x P` correlation matrix.
    pub correlation: Summary,
    /// `Q x P`: one row per covariate (intercept last), one column per outcome.
    pub coefficients: Summary,
    /// `1 x P`; ordinal outcomes have standard deviation 1.
    pub sigma: Summary,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EstimatesReport {
    pub populations: Vec<PopulationEstimates>,
}

impl EstimatesReport {
    pub fn from_chains(chains: &[PosteriorChain], spec: &ModelSpec) -> Result<Self> {
        let p = spec.outcomes();
        let q = spec.covariates();
        let layout = spec.rho_layout();
        let draws: usize = chains.iter().map(PosteriorChain::len).sum();
        if draws == 0 {
            return Err(Error::Config("no posterior draws to summarize".into()));
        }
        let mut populations = Vec::with_capacity(spec.populations());
        for g in 0..spec.populations() {
            let mut corr = Vec::with_capacity(draws);
            let mut coef = Vec::with_capacity(draws);
            let mut sd = Vec::with_capacity(draws);
            for chain in chains {
                for (s, row) in chain.rho.rows().enumerate() {
                    corr.push(layout.unpack(row).swap_remove(g));
                    coef.push(chain.coefficients[s][g].clone());
                    let sigma = &chain.sigmas[s][g];
                    sd.push(DMatrix::from_fn(1, p, |_, j| sigma.get(j).copied().unwrap_or(1.0)));
                }
            }
            populations.push(PopulationEstimates {
                correlation: Summary::from_draws(p, p, &corr),
                coefficients: Summary::from_draws(q, p, &coef),
                sigma: Summary::from_draws(1, p, &sd),
            });
        }
        Ok(EstimatesReport { populations })
    }

    pub fn is_ordered(&self) -> bool {
        self.populations
            .iter()
            .all(|p| p.correlation.is_ordered() && p.coefficients.is_ordered() && p.sigma.is_ordered())
    }
}

fn hypothesis_label(t: usize) -> String {
    format!("Hypothesis{t:>3}")
}

const COMPLEMENT_LABEL: &str = "Complement hypothesis*";

/// `BCT_output.txt`
pub fn format_output(report: &BayesFactorReport) -> String {
    let mut out = String::from("Posterior probabilities for the hypotheses\n");
    for (t, p) in report.probabilities.iter().enumerate() {
        out.push_str(" \n");
        if t < report.hypotheses.len() {
            out.push_str(&hypothesis_label(t + 1));
        } else {
            out.push_str(COMPLEMENT_LABEL);
        }
        out.push_str(&format!("\n{p:.4}\n"));
    }
    out
}

fn format_triples(report: &BayesFactorReport, header: &str, blank: &str, fit: bool) -> String {
    let mut out = format!("{header}\n");
    let rows = report
        .hypotheses
        .iter()
        .enumerate()
        .map(|(t, h)| (hypothesis_label(t + 1), h.bayes_factor.components))
        .chain(std::iter::once((COMPLEMENT_LABEL.to_string(), report.complement.components)));
    for (label, c) in rows {
        let (total, e, i) = if fit {
            (c.rf(), c.rf_e, c.rf_i)
        } else {
            (c.rc(), c.rc_e, c.rc_i)
        };
        out.push_str(&format!("{blank}\n{label}\n{total:.5} {e:.5} {i:.5}\n"));
    }
    out
}

/// `BCT_output_relComp.txt`
pub fn format_rel_comp(report: &BayesFactorReport) -> String {
    format_triples(report, "rc      rcE     rcI", "", false)
}

/// `BCT_output_relFit.txt`
pub fn format_rel_fit(report: &BayesFactorReport) -> String {
    format_triples(report, "rf      rfE     rfI", " ", true)
}

fn format_row(values: impl Iterator<Item = f64>) -> String {
    values.map(|v| format!("{v:7.3}")).collect::<Vec<_>>().join(" ")
}

fn push_blocks(out: &mut String, summary: &Summary, lower_triangle: bool) {
    let blocks = [
        ("lower bound of 95", &summary.lower),
        ("median", &summary.median),
        ("upper bound of 95", &summary.upper),
    ];
    for (k, (title, m)) in blocks.iter().enumerate() {
        if k > 0 {
            out.push_str(" \n");
        }
        out.push_str(title);
        out.push('\n');
        for i in 0..m.nrows() {
            let cols = if lower_triangle { i + 1 } else { m.ncols() };
            out.push_str(&format_row((0..cols).map(|j| m[(i, j)])));
            out.push('\n');
        }
    }
}

/// `BCT_estimates.txt`
pub fn format_estimates(est: &EstimatesReport) -> String {
    let mut out = String::from("Estimates were obtained under the unconstrained model\n \nCorrelation matrix\n");
    for (g, pop) in est.populations.iter().enumerate() {
        out.push_str(&format!(" \nPopulation{:>3}\n \n", g + 1));
        push_blocks(&mut out, &pop.correlation, true);
    }
    out.push_str(" \n \nB-matrix with intercepts and regression coefficients\n");
    for (g, pop) in est.populations.iter().enumerate() {
        out.push_str(if g == 0 { "\n" } else { " \n" });
        out.push_str(&format!("Population{:>3}\n \n", g + 1));
        push_blocks(&mut out, &pop.coefficients, false);
    }
    out.push_str(" \n \nstandard deviations\n");
    for (g, pop) in est.populations.iter().enumerate() {
        out.push_str(&format!(" \nPopulation{:>3}\n \n", g + 1));
        push_blocks(&mut out, &pop.sigma, false);
    }
    out
}

fn write_file(path: &Path, text: &str, crlf: bool) -> Result<()> {
    let body = if crlf { text.replace('\n', "\r\n") } else { text.to_string() };
    fs::write(path, body).map_err(|e| Error::io(path, e))
}

/// Writes the four report files into `dir`. Without hypotheses only the
/// estimates file is written. Returns the written paths.
pub fn write_reports(
    dir: &Path,
    report: Option<&BayesFactorReport>,
    estimates: &EstimatesReport,
    crlf: bool,
) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    if let Some(report) = report {
        for (name, text) in [
            (OUTPUT_FILE, format_output(report)),
            (REL_COMP_FILE, format_rel_comp(report)),
            (REL_FIT_FILE, format_rel_fit(report)),
        ] {
            let path = dir.join(name);
            write_file(&path, &text, crlf)?;
            written.push(path);
        }
    }
    let path = dir.join(ESTIMATES_FILE);
    write_file(&path, &format_estimates(estimates), crlf)?;
    written.push(path);
    Ok(written)
}

/// Reads `(label, probability)` pairs back from an output file.
pub fn read_probabilities(text: &str) -> Result<Vec<(String, f64)>> {
    read_labelled(text, 1).map(|v| v.into_iter().map(|(l, x)| (l, x[0])).collect())
}

/// Reads `(label, [total, equality part, order part])` back from a relComp or relFit file.
pub fn read_triples(text: &str) -> Result<Vec<(String, [f64; 3])>> {
    read_labelled(text, 3).map(|v| v.into_iter().map(|(l, x)| (l, [x[0], x[1], x[2]])).collect())
}

fn read_labelled(text: &str, width: usize) -> Result<Vec<(String, Vec<f64>)>> {
    let mut out = Vec::new();
    let mut label: Option<String> = None;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.starts_with("Hypothesis") || line.starts_with("Complement") {
            label = Some(line.to_string());
        } else if let Some(l) = label.take() {
            let values = line
                .split_whitespace()
                .map(|t| t.parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|_| Error::parse("report", i + 1, format!("expected numbers, found '{line}'")))?;
            if values.len() != width {
                return Err(Error::parse("report", i + 1, format!("expected {width} numbers")));
            }
            out.push((l, values));
        }
    }
    Ok(out)
}

/// Reads the numeric rows of an estimates file in order of appearance.
pub fn read_estimate_rows(text: &str) -> Vec<Vec<f64>> {
    text.lines()
        .filter_map(|l| {
            let values: Option<Vec<f64>> = l.split_whitespace().map(|t| t.parse().ok()).collect();
            values.filter(|v| !v.is_empty() && !l.trim_start().starts_with("Population"))
        })
        .collect()
}

/// Options of a complete run.
#[derive(Clone, Debug)]
pub struct RunOptions {
    pub input: PathBuf,
    pub data: PathBuf,
    pub outdir: PathBuf,
    pub chains: usize,
    pub burn_in: usize,
    pub crlf: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            input: PathBuf::from(INPUT_FILE),
            data: PathBuf::from(DATA_FILE),
            outdir: PathBuf::from("."),
            chains: 1,
            burn_in: ChainConfig::default().burn_in,
            crlf: false,
        }
    }
}

#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub config: RunConfig,
    pub report: Option<BayesFactorReport>,
    pub estimates: EstimatesReport,
    pub written: Vec<PathBuf>,
    pub warnings: Vec<String>,
}

// stream ids that keep prior sampling and evaluation apart from the chains
const PRIOR_STREAM: u64 = 1 << 32;
const EVALUATION_STREAM: u64 = (1 << 32) + 1;

/// Parses the inputs, runs the sampler, evaluates the hypotheses and writes
/// the reports. `progress` receives human-readable status lines.
pub fn run(options: &RunOptions, progress: &mut dyn FnMut(&str)) -> Result<RunOutcome> {
    let input_name = options.input.display().to_string();
    let input = fs::read_to_string(&options.input).map_err(|e| Error::io(&options.input, e))?;
    let config = parse_input_named(&input, &input_name)?;
    let data_name = options.data.display().to_string();
    let data_text = fs::read_to_string(&options.data).map_err(|e| Error::io(&options.data, e))?;
    let data = parse_data_named(&data_text, &config, &data_name)?;
    let spec = data.spec();
    progress(&format!(
        "data: {} observations, {} outcomes ({} ordinal), {} regressors, {} population(s)",
        config.n_total,
        spec.outcomes(),
        spec.ordinal(),
        spec.covariates(),
        spec.populations()
    ));
    if options.chains == 0 {
        return Err(Error::Config("--chains must be at least 1".into()));
    }
    if !options.outdir.is_dir() {
        return Err(Error::io(
            &options.outdir,
            std::io::Error::new(std::io::ErrorKind::NotFound, "output directory does not exist"),
        ));
    }

    let chain_config = ChainConfig {
        burn_in: options.burn_in,
        draws: config.posterior_draws.div_ceil(options.chains),
        seed: config.seed,
        ..ChainConfig::default()
    };
    progress(&format!(
        "sampling {} chain(s): {} burn-in + {} retained iterations each",
        options.chains, chain_config.burn_in, chain_config.draws
    ));
    let chains = mcmc::run_chains(&data, &chain_config, options.chains)?;
    for (k, chain) in chains.iter().enumerate() {
        let fmt_rates = |v: &[Vec<f64>]| {
            v.iter()
                .flatten()
                .map(|r| format!("{r:.2}"))
                .collect::<Vec<_>>()
                .join(",")
        };
        progress(&format!(
            "chain {}: {} draws; correlation step acceptance {:.3}; sigma acceptance [{}]; expansion acceptance [{}]",
            k + 1,
            chain.len(),
            chain.correlation_accepted as f64 / chain.correlation_proposals.max(1) as f64,
            fmt_rates(&chain.acceptance.sigma),
            fmt_rates(&chain.acceptance.expansion)
        ));
    }
    let estimates = EstimatesReport::from_chains(&chains, spec)?;

    let mut warnings = Vec::new();
    let report = match config.hypothesis_set() {
        None => {
            progress("no hypotheses: writing estimates only");
            None
        }
        Some(set) => {
            let posterior = mcmc::pool_rho(&chains)?;
            let mut prior_rng = ChaCha8Rng::seed_from_u64(config.seed);
            prior_rng.set_stream(PRIOR_STREAM);
            progress(&format!("drawing {} prior correlation vectors", config.prior_draws));
            let prior_sample = prior::sample_prior_rho(spec.rho_layout(), config.prior_draws, &mut prior_rng)?;
            let eval = EvaluationConfig {
                draws_per_constraint: config.draws_per_constraint,
                ..EvaluationConfig::default()
            };
            let mut eval_rng = ChaCha8Rng::seed_from_u64(config.seed);
            eval_rng.set_stream(EVALUATION_STREAM);
            let report = bayes_factor::evaluate(&set, &prior_sample, &posterior, &eval, &mut eval_rng)?;
            report.check_identities(1e-12)?;
            warnings.extend(report.warnings.iter().cloned());
            Some(report)
        }
    };
    let written = write_reports(&options.outdir, report.as_ref(), &estimates, options.crlf)?;
    Ok(RunOutcome {
        config,
        report,
        estimates,
        written,
        warnings,
    })
}
