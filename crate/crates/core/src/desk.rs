//! Small built-in systems: the 5-bus desk network with a synthetic year of
//! data, plus single-day fixtures used by tests and examples.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::scenario::{reduce_days, RepresentativeDay, ScenarioError};
use crate::system::{
    Bus, DailyProfile, EconomicParams, Generator, Line, PowerSystem, Segment, StorageSpec,
    HOURS_PER_DAY,
};
use crate::uc::Case;

pub const DESK_SEED: u64 = 2021;
pub const DESK_DAYS: usize = 365;
/// Representative days, retained variance and clustering seed of the
/// standard reduced desk case.
pub const DESK_K: usize = 5;
pub const DESK_VARIANCE: f64 = 0.95;
pub const DESK_REDUCTION_SEED: u64 = 7;

fn bus(id: &str, candidate: bool) -> Bus {
    Bus {
        id: id.into(),
        candidate_storage: candidate,
    }
}

fn line(id: &str, from: usize, to: usize, reactance: f64, capacity: f64) -> Line {
    Line {
        id: id.into(),
        from,
        to,
        reactance,
        capacity,
    }
}

fn seg(max_mw: f64, cost: f64, emissions: f64) -> Segment {
    Segment {
        max_mw,
        cost,
        emissions,
    }
}

/// A unit without a minimum block, no-load cost or startup cost.
pub fn flexible_unit(id: &str, bus: usize, segments: Vec<Segment>) -> Generator {
    Generator {
        id: id.into(),
        bus,
        gmin: 0.0,
        gmax: segments.iter().map(|s| s.max_mw).sum(),
        cmin: 0.0,
        csu: 0.0,
        emin: 0.0,
        esu: 0.0,
        min_up: 1,
        min_down: 1,
        segments,
    }
}

fn desk_network() -> (Vec<Bus>, Vec<Line>, Vec<Generator>) {
    let buses = vec![
        bus("1", true),
        bus("2", false),
        bus("3", true),
        bus("4", false),
        bus("5", true),
    ];
    let lines = vec![
        line("L12", 0, 1, 0.05, 220.0),
        line("L13", 0, 2, 0.08, 160.0),
        line("L23", 1, 2, 0.10, 120.0),
        line("L24", 1, 3, 0.06, 150.0),
        line("L35", 2, 4, 0.10, 100.0),
        line("L45", 3, 4, 0.10, 110.0),
    ];
    let coal = Generator {
        id: "coal".into(),
        bus: 0,
        gmin: 80.0,
        gmax: 250.0,
        cmin: 1_400.0,
        csu: 4_000.0,
        emin: 80.0,
        esu: 12.0,
        min_up: 8,
        min_down: 8,
        segments: vec![seg(90.0, 19.0, 0.98), seg(80.0, 22.0, 1.02)],
    };
    let ccgt = Generator {
        id: "ccgt".into(),
        bus: 1,
        gmin: 40.0,
        gmax: 150.0,
        cmin: 1_250.0,
        csu: 1_200.0,
        emin: 16.0,
        esu: 3.0,
        min_up: 4,
        min_down: 4,
        segments: vec![seg(60.0, 33.0, 0.37), seg(50.0, 36.0, 0.40)],
    };
    let gens = vec![
        coal,
        ccgt,
        flexible_unit("ct", 3, vec![seg(60.0, 68.0, 0.55), seg(60.0, 76.0, 0.60)]),
        flexible_unit("peaker", 4, vec![seg(70.0, 98.0, 0.75)]),
        flexible_unit("oil", 2, vec![seg(90.0, 125.0, 0.85)]),
    ];
    (buses, lines, gens)
}

/// Load share of each bus; bus 1 hosts generation only.
const LOAD_SHARE: [f64; 5] = [0.0, 0.27, 0.24, 0.22, 0.27];

/// Synthetic year for the desk network. Deterministic in `seed`; values are
/// rounded to 3 decimals so the bundled CSV files reproduce them exactly.
pub fn desk_system(seed: u64) -> PowerSystem {
    let (buses, lines, generators) = desk_network();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nt = DESK_DAYS * HOURS_PER_DAY;
    let mut load = vec![vec![0.0; nt]; 5];
    let mut ren = vec![vec![0.0; nt]; 5];
    let mut wind = 0.45f64;
    for d in 0..DESK_DAYS {
        let season = (2.0 * PI * (d as f64 - 200.0) / 365.0).cos();
        let weekend = d % 7 >= 5;
        let level = 520.0
            * (1.0 + 0.12 * season)
            * if weekend { 0.9 } else { 1.0 }
            * (1.0 + 0.03 * rng.gen_range(-1.0..1.0));
        let cloud = rng.gen_range(0.35..1.0);
        let daylight = 12.0 - 3.0 * season;
        for h in 0..HOURS_PER_DAY {
            let x = h as f64;
            let morning = (-(x - 8.0).powi(2) / 6.0).exp();
            let evening = (-(x - 19.0).powi(2) / 8.0).exp();
            let night = 0.62 + 0.04 * (2.0 * PI * x / 24.0).cos();
            let shape = night + 0.22 * morning + 0.38 * evening;
            let k = d * HOURS_PER_DAY + h;
            for b in 0..5 {
                let noise = 1.0 + 0.02 * rng.gen_range(-1.0..1.0);
                load[b][k] = round3(level * shape * LOAD_SHARE[b] * noise);
            }
            wind = (wind + 0.08 * rng.gen_range(-1.0..1.0) + 0.05 * (0.45 - wind)).clamp(0.0, 1.0);
            ren[0][k] = round3(140.0 * wind * (1.0 + 0.15 * (2.0 * PI * x / 24.0).cos()) / 1.15);
            let sun = ((x + 0.5 - (12.0 - daylight / 2.0)) / daylight * PI)
                .sin()
                .max(0.0);
            ren[2][k] = round3(110.0 * cloud * sun);
        }
    }
    PowerSystem {
        buses,
        lines,
        generators,
        load,
        ren,
    }
}

fn round3(v: f64) -> f64 {
    (v * 1000.0).round() / 1000.0
}

/// The desk year as bundled under `data/desk5`.
pub fn bundled_desk_dir() -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("data")
        .join("desk5")
}

/// Desk network with every day weighted equally, for when the whole year is wanted.
pub fn desk_case(system: PowerSystem, days: Vec<RepresentativeDay>) -> Case {
    Case {
        system,
        days,
        econ: EconomicParams::default(),
        storage: StorageSpec::default(),
    }
}

/// The desk year reduced to [`DESK_K`] representative days.
pub fn desk_reduced() -> Result<Case, ScenarioError> {
    let system = desk_system(DESK_SEED);
    let red = reduce_days(&system.days(), DESK_K, DESK_VARIANCE, DESK_REDUCTION_SEED)?;
    Ok(desk_case(system, red.days))
}

/// Economic settings with unit day weight, so model objectives read as plain
/// daily dollars.
pub fn unweighted_econ() -> EconomicParams {
    EconomicParams {
        days_per_year: 1.0,
        ..EconomicParams::default()
    }
}

fn flat(nb: usize, nt: usize, v: f64) -> Vec<Vec<f64>> {
    vec![vec![v; nt]; nb]
}

/// One bus, one 100 MW unit at $20/MWh and 0.5 t/MWh, flat 50 MW load over `hours`.
pub fn toy_one_bus(hours: usize) -> Case {
    let system = PowerSystem {
        buses: vec![bus("1", true)],
        lines: vec![],
        generators: vec![flexible_unit("g", 0, vec![seg(100.0, 20.0, 0.5)])],
        load: flat(1, HOURS_PER_DAY, 50.0),
        ren: flat(1, HOURS_PER_DAY, 0.0),
    };
    let profile = DailyProfile {
        load: flat(1, hours, 50.0),
        ren: flat(1, hours, 0.0),
    };
    Case {
        system,
        days: vec![RepresentativeDay::whole(profile)],
        econ: unweighted_econ(),
        storage: StorageSpec::default(),
    }
}

/// A cheap $20 unit at bus 1 feeding a 60 MW pocket at bus 2 over a 40 MW
/// line; a $50 unit inside the pocket covers the rest.
pub fn two_bus_congested(hours: usize) -> Case {
    let system = PowerSystem {
        buses: vec![bus("1", true), bus("2", true)],
        lines: vec![line("L12", 0, 1, 0.1, 40.0)],
        generators: vec![
            flexible_unit("cheap", 0, vec![seg(200.0, 20.0, 0.9)]),
            flexible_unit("local", 1, vec![seg(100.0, 50.0, 0.4)]),
        ],
        load: vec![vec![0.0; HOURS_PER_DAY], vec![60.0; HOURS_PER_DAY]],
        ren: flat(2, HOURS_PER_DAY, 0.0),
    };
    let profile = DailyProfile {
        load: vec![vec![0.0; hours], vec![60.0; hours]],
        ren: flat(2, hours, 0.0),
    };
    Case {
        system,
        days: vec![RepresentativeDay::whole(profile)],
        econ: unweighted_econ(),
        storage: StorageSpec::default(),
    }
}
