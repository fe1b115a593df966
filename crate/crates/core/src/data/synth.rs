//! Deterministic synthetic benchmark tables.
//!
//! Each generator emits a CSV whose columns match a bundled schema and
//! whose labels follow a fixed logistic model over the generated features,
//! so accuracy and base rates are stable across runs for a given seed.
//! Class-conditional structure, base rates, and the strength of the
//! sensitive attribute's effect are chosen to mimic the published
//! benchmark datasets they stand in for.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;

pub const ADULT_SCHEMA: &str = "\
# Census income benchmark layout.
age|continuous|17:90|feature
education_num|continuous|1:16|feature
hours_per_week|continuous|1:99|feature
capital_gain|continuous|0:50000|feature
workclass|categorical|Private,SelfEmp,Gov,Other|feature
marital|categorical|Married,Never,Divorced|feature
occupation|categorical|Exec,Prof,Sales,Service,Manual|feature
sex|categorical|Male,Female|sensitive
income|categorical|<=50K,>50K|label
";

pub const BANK_SCHEMA: &str = "\
# Bank marketing benchmark layout; age is the protected attribute,
# binarized at 40.
balance|continuous|0:100000|feature
duration|continuous|0:5000|feature
campaign|continuous|1:10|feature
job|categorical|White,Blue,Tech,Other|feature
marital|categorical|married,single,divorced|feature
housing|categorical|yes,no|feature
age|threshold|40|sensitive
y|categorical|no,yes|label
";

pub const CREDIT_SCHEMA: &str = "\
# Credit scoring benchmark layout; age is the protected attribute,
# binarized at 40.
duration|continuous|4:72|feature
amount|continuous|250:20000|feature
checking|categorical|none,low,mid,high|feature
history|categorical|good,ok,poor|feature
purpose|categorical|car,radio,furniture,business|feature
age|threshold|40|sensitive
outcome|categorical|good,bad|label
";

pub const COMPAS_SCHEMA: &str = "\
# Recidivism benchmark layout.
age|continuous|18:70|feature
priors_count|continuous|0:25|feature
juv_fel_count|continuous|0:5|feature
charge_degree|categorical|F,M|feature
sex|categorical|Male,Female|feature
race|categorical|African-American,Caucasian|sensitive
two_year_recid|categorical|no,yes|label
";

/// Schema-only stub; no bundled generator.
pub const HEALTH_SCHEMA: &str = "\
# Stub layout for a hospital-stay style benchmark.
stay_days|continuous|0:365|feature
claim_count|continuous|0:100|feature
age_group|threshold|65|sensitive
morbidity|categorical|low,high|label
";

/// Schema-only stub; no bundled generator.
pub const LAW_SCHEMA: &str = "\
# Stub layout for a bar-passage style benchmark.
lsat|continuous|11:48|feature
ugpa|continuous|0:4|feature
race|categorical|White,NonWhite|sensitive
pass_bar|categorical|no,yes|label
";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Benchmark {
    Adult,
    Bank,
    Credit,
    Compas,
}

impl Benchmark {
    pub const ALL: [Benchmark; 4] =
        [Benchmark::Adult, Benchmark::Bank, Benchmark::Credit, Benchmark::Compas];

    pub fn name(self) -> &'static str {
        match self {
            Benchmark::Adult => "adult",
            Benchmark::Bank => "bank",
            Benchmark::Credit => "credit",
            Benchmark::Compas => "compas",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|b| b.name() == name)
    }

    pub fn schema_text(self) -> &'static str {
        match self {
            Benchmark::Adult => ADULT_SCHEMA,
            Benchmark::Bank => BANK_SCHEMA,
            Benchmark::Credit => CREDIT_SCHEMA,
            Benchmark::Compas => COMPAS_SCHEMA,
        }
    }

    pub fn default_rows(self) -> usize {
        match self {
            Benchmark::Adult => 16_000,
            Benchmark::Bank => 9_000,
            Benchmark::Credit => 1_000,
            Benchmark::Compas => 6_000,
        }
    }

    pub fn default_seed(self) -> u64 {
        match self {
            Benchmark::Adult => 0xDA7A_0001,
            Benchmark::Bank => 0xDA7A_0002,
            Benchmark::Credit => 0xDA7A_0003,
            Benchmark::Compas => 0xDA7A_0004,
        }
    }
}

/// Generates the CSV body for one benchmark. Identical `(benchmark, rows,
/// seed)` arguments produce byte-identical output.
pub fn generate(benchmark: Benchmark, rows: usize, seed: u64) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match benchmark {
        Benchmark::Adult => adult(rows, &mut rng),
        Benchmark::Bank => bank(rows, &mut rng),
        Benchmark::Credit => credit(rows, &mut rng),
        Benchmark::Compas => compas(rows, &mut rng),
    }
}

/// Writes `<name>.csv` and `<name>.schema` into `dir`, returning both paths.
pub fn write_benchmark(
    dir: &Path,
    benchmark: Benchmark,
    rows: usize,
    seed: u64,
) -> Result<(PathBuf, PathBuf)> {
    std::fs::create_dir_all(dir)?;
    let csv_path = dir.join(format!("{}.csv", benchmark.name()));
    let schema_path = dir.join(format!("{}.schema", benchmark.name()));
    std::fs::write(&csv_path, generate(benchmark, rows, seed))?;
    std::fs::write(&schema_path, benchmark.schema_text())?;
    Ok((csv_path, schema_path))
}

fn normal(rng: &mut ChaCha8Rng, mu: f64, sd: f64) -> f64 {
    let u1: f64 = rng.gen::<f64>().max(1e-12);
    let u2: f64 = rng.gen();
    mu + sd * (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

fn pick<'a>(rng: &mut ChaCha8Rng, weighted: &[(&'a str, f64)]) -> (&'a str, usize) {
    let total: f64 = weighted.iter().map(|(_, w)| w).sum();
    let mut q = rng.gen::<f64>() * total;
    for (i, (name, w)) in weighted.iter().enumerate() {
        q -= w;
        if q <= 0.0 {
            return (name, i);
        }
    }
    (weighted.last().unwrap().0, weighted.len() - 1)
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

fn positive(rng: &mut ChaCha8Rng, z: f64) -> bool {
    rng.gen::<f64>() < sigmoid(z)
}

fn clampi(v: f64, lo: i64, hi: i64) -> i64 {
    (v.round() as i64).clamp(lo, hi)
}

fn adult(rows: usize, rng: &mut ChaCha8Rng) -> String {
    let mut out = String::new();
    out.push_str(
        "age,education_num,hours_per_week,capital_gain,workclass,marital,occupation,sex,income\n",
    );
    const WORKCLASS: [(&str, f64); 4] =
        [("Private", 0.70), ("SelfEmp", 0.13), ("Gov", 0.13), ("Other", 0.04)];
    const WC_EFFECT: [f64; 4] = [0.0, 0.55, 0.11, -0.99];
    const MARITAL: [(&str, f64); 3] = [("Married", 0.47), ("Never", 0.33), ("Divorced", 0.20)];
    const MA_EFFECT: [f64; 3] = [1.98, -1.21, -0.22];
    const OCCUPATION: [(&str, f64); 5] = [
        ("Exec", 0.17),
        ("Prof", 0.17),
        ("Sales", 0.15),
        ("Service", 0.21),
        ("Manual", 0.30),
    ];
    const OC_EFFECT: [f64; 5] = [1.10, 0.99, 0.22, -0.66, -0.77];
    const SEX: [(&str, f64); 2] = [("Male", 0.67), ("Female", 0.33)];
    const SEX_EFFECT: [f64; 2] = [0.30, -0.30];

    for _ in 0..rows {
        let age = clampi(normal(rng, 38.0, 13.0), 17, 90);
        let edu = clampi(normal(rng, 10.0, 2.6), 1, 16);
        let hours = clampi(normal(rng, 40.0, 12.0), 1, 99);
        let gain = if rng.gen::<f64>() < 0.85 {
            0
        } else {
            clampi((rng.gen::<f64>() * 50_001f64.ln()).exp() - 1.0, 0, 50_000)
        };
        let (wc, wci) = pick(rng, &WORKCLASS);
        let (ma, mai) = pick(rng, &MARITAL);
        let (oc, oci) = pick(rng, &OCCUPATION);
        let (sex, sexi) = pick(rng, &SEX);

        let z = -8.3
            + 5.3 * (edu - 1) as f64 / 15.0
            + 4.0 * (age - 17) as f64 / 73.0
            + 3.3 * (hours - 1) as f64 / 98.0
            + 4.4 * gain as f64 / 50_000.0
            + WC_EFFECT[wci]
            + MA_EFFECT[mai]
            + OC_EFFECT[oci]
            + SEX_EFFECT[sexi];
        let income = if positive(rng, z) { ">50K" } else { "<=50K" };
        writeln!(out, "{age},{edu},{hours},{gain},{wc},{ma},{oc},{sex},{income}").unwrap();
    }
    out
}

fn bank(rows: usize, rng: &mut ChaCha8Rng) -> String {
    let mut out = String::new();
    out.push_str("balance,duration,campaign,job,marital,housing,age,y\n");
    const JOB: [(&str, f64); 4] = [("White", 0.30), ("Blue", 0.35), ("Tech", 0.20), ("Other", 0.15)];
    const JOB_EFFECT: [f64; 4] = [0.40, -0.40, 0.20, 0.0];
    const MARITAL: [(&str, f64); 3] = [("married", 0.60), ("single", 0.28), ("divorced", 0.12)];
    const MA_EFFECT: [f64; 3] = [-0.10, 0.30, 0.0];
    const HOUSING: [(&str, f64); 2] = [("yes", 0.56), ("no", 0.44)];
    const HO_EFFECT: [f64; 2] = [-0.40, 0.40];

    for _ in 0..rows {
        let age = clampi(normal(rng, 41.0, 11.0), 18, 95);
        let balance = clampi(1362.0 * ((2.5 * rng.gen::<f64>()).exp() - 1.0), 0, 100_000);
        let duration = clampi(normal(rng, 5.5, 0.8).exp(), 0, 5_000);
        let campaign = 1 + (rng.gen::<f64>().powi(3) * 9.999) as i64;
        let (job, jobi) = pick(rng, &JOB);
        let (ma, mai) = pick(rng, &MARITAL);
        let (ho, hoi) = pick(rng, &HOUSING);

        let z = -3.4
            + 3.0 * ((1.0 + duration as f64).ln() - 5.5) / 0.8
            + 0.8 * ((1.0 + balance as f64).ln() - 6.9) / 1.2
            - 0.20 * (campaign - 1) as f64
            + JOB_EFFECT[jobi]
            + MA_EFFECT[mai]
            + HO_EFFECT[hoi]
            + if age > 40 { -0.24 } else { 0.26 };
        let y = if positive(rng, z) { "yes" } else { "no" };
        writeln!(out, "{balance},{duration},{campaign},{job},{ma},{ho},{age},{y}").unwrap();
    }
    out
}

fn credit(rows: usize, rng: &mut ChaCha8Rng) -> String {
    let mut out = String::new();
    out.push_str("duration,amount,checking,history,purpose,age,outcome\n");
    const CHECKING: [(&str, f64); 4] =
        [("none", 0.39), ("low", 0.27), ("mid", 0.27), ("high", 0.07)];
    const CH_EFFECT: [f64; 4] = [1.90, -1.50, -0.25, 1.15];
    const HISTORY: [(&str, f64); 3] = [("good", 0.53), ("ok", 0.31), ("poor", 0.16)];
    const HI_EFFECT: [f64; 3] = [1.55, 0.0, -1.85];
    const PURPOSE: [(&str, f64); 4] =
        [("car", 0.37), ("radio", 0.28), ("furniture", 0.18), ("business", 0.17)];
    const PU_EFFECT: [f64; 4] = [-0.25, 0.55, 0.0, -0.40];

    for _ in 0..rows {
        let age = clampi(normal(rng, 35.5, 11.4), 19, 75);
        let duration = clampi(normal(rng, 3.0, 0.55).exp(), 4, 72);
        let amount = clampi(normal(rng, 7.9, 0.9).exp(), 250, 20_000);
        let (ch, chi) = pick(rng, &CHECKING);
        let (hi, hii) = pick(rng, &HISTORY);
        let (pu, pui) = pick(rng, &PURPOSE);

        let z = 1.15
            + CH_EFFECT[chi]
            + HI_EFFECT[hii]
            + PU_EFFECT[pui]
            - 3.3 * (duration - 4) as f64 / 68.0
            - 1.45 * (amount - 250) as f64 / 19_750.0
            + if age > 40 { 0.42 } else { -0.11 };
        let outcome = if positive(rng, z) { "good" } else { "bad" };
        writeln!(out, "{duration},{amount},{ch},{hi},{pu},{age},{outcome}").unwrap();
    }
    out
}

fn compas(rows: usize, rng: &mut ChaCha8Rng) -> String {
    let mut out = String::new();
    out.push_str("age,priors_count,juv_fel_count,charge_degree,sex,race,two_year_recid\n");
    const DEGREE: [(&str, f64); 2] = [("F", 0.64), ("M", 0.36)];
    const DE_EFFECT: [f64; 2] = [0.30, -0.30];
    const SEX: [(&str, f64); 2] = [("Male", 0.81), ("Female", 0.19)];
    const SEX_EFFECT: [f64; 2] = [0.40, -0.40];
    const RACE: [(&str, f64); 2] = [("African-American", 0.51), ("Caucasian", 0.49)];
    const RACE_EFFECT: [f64; 2] = [0.30, -0.30];

    for _ in 0..rows {
        let age = clampi(17.0 + normal(rng, 2.7, 0.5).exp(), 18, 70);
        let priors = clampi(normal(rng, 0.8, 1.1).exp() - 1.0, 0, 25);
        let juv = if rng.gen::<f64>() < 0.90 { 0 } else { 1 + (rng.gen::<f64>() * 4.999) as i64 };
        let (de, dei) = pick(rng, &DEGREE);
        let (sex, sexi) = pick(rng, &SEX);
        let (race, racei) = pick(rng, &RACE);

        let z = -0.2
            + 3.0 * (1.0 + priors as f64).ln() / 26f64.ln()
            + 0.8 * (juv.min(2) as f64)
            - 2.85 * (age - 18) as f64 / 52.0
            + DE_EFFECT[dei]
            + SEX_EFFECT[sexi]
            + RACE_EFFECT[racei];
        let recid = if positive(rng, z) { "yes" } else { "no" };
        writeln!(out, "{age},{priors},{juv},{de},{sex},{race},{recid}").unwrap();
    }
    out
}
