//! Writes the synthetic 10-stock price panel used by the end-to-end tests.
//!
//! Prices follow a three-factor geometric random walk over a weekday calendar
//! thinned to 988 rows in 2018-2021 and 248 rows in 2022. A handful of cells
//! are left blank to exercise forward-filling.
//!
//! ```text
//! cargo run -p portopt-core --example generate_fixture -- crates/core/tests/fixtures/synthetic_energy.csv
//! ```

use std::fmt::Write as _;

use chrono::{Datelike, NaiveDate, Weekday};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

const TICKERS: [&str; 10] = [
    "RELIANCE.NS",
    "NTPC.NS",
    "POWERGRID.NS",
    "ONGC.NS",
    "TATAPOWER.NS",
    "BPCL.NS",
    "IOC.NS",
    "GAIL.NS",
    "ADANITRANS.NS",
    "ADANIGREEN.NS",
];

fn weekdays(from: NaiveDate, to: NaiveDate) -> Vec<NaiveDate> {
    from.iter_days()
        .take_while(|d| *d <= to)
        .filter(|d| !matches!(d.weekday(), Weekday::Sat | Weekday::Sun))
        .collect()
}

/// Keeps exactly `keep` of `days`, dropping a random subset as holidays.
fn thin(days: Vec<NaiveDate>, keep: usize, rng: &mut ChaCha8Rng) -> Vec<NaiveDate> {
    let mut idx = sample(rng, days.len(), keep).into_vec();
    idx.sort_unstable();
    idx.into_iter().map(|i| days[i]).collect()
}

fn main() {
    let path = std::env::args().nth(1);
    let mut rng = ChaCha8Rng::seed_from_u64(20_180_101);
    let d = |y, m, day| NaiveDate::from_ymd_opt(y, m, day).unwrap();
    let mut dates = thin(weekdays(d(2018, 1, 1), d(2021, 12, 31)), 988, &mut rng);
    dates.extend(thin(weekdays(d(2022, 1, 1), d(2022, 12, 31)), 248, &mut rng));

    let n = TICKERS.len();
    let loadings: Vec<[f64; 3]> = (0..n)
        .map(|_| {
            [
                rng.random_range(0.4..1.0),
                rng.random_range(-0.5..0.5),
                rng.random_range(-0.3..0.3),
            ]
        })
        .collect();
    let idio: Vec<f64> = (0..n).map(|_| rng.random_range(0.006..0.014)).collect();
    let drift: Vec<f64> = (0..n).map(|_| rng.random_range(-0.0002..0.0012)).collect();
    let mut price: Vec<f64> = (0..n).map(|_| rng.random_range(80.0..2500.0)).collect();

    let mut out = String::from("date");
    for t in TICKERS {
        write!(out, ",{t}").unwrap();
    }
    out.push('\n');
    for (row, date) in dates.iter().enumerate() {
        if row > 0 {
            let f: [f64; 3] = std::array::from_fn(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                0.01 * z
            });
            for j in 0..n {
                let e: f64 = StandardNormal.sample(&mut rng);
                let r = drift[j] + loadings[j].iter().zip(&f).map(|(l, x)| l * x).sum::<f64>() + idio[j] * e;
                price[j] *= r.exp();
            }
        }
        write!(out, "{}", date.format("%Y-%m-%d")).unwrap();
        for p in &price {
            // about one cell in 400 is missing after the first row
            if row > 0 && rng.random_range(0..400) == 0 {
                out.push(',');
            } else {
                write!(out, ",{p:.2}").unwrap();
            }
        }
        out.push('\n');
    }
    match path {
        Some(p) => std::fs::write(&p, out).expect("write fixture"),
        None => print!("{out}"),
    }
}
