use snsqkd::exec::Execution;
use snsqkd::mcsim::{self, McConfig};
use snsqkd::optimizer::{optimize, OptimizationSpec};
use snsqkd::pipeline::{PipelineConfig, Variant};
use snsqkd::presets;

fn best(preset: &presets::Preset, l: f64, variant: Variant) -> f64 {
    let exp = preset.exp.at_distance(l);
    optimize(
        &OptimizationSpec::asymptotic(),
        &exp,
        PipelineConfig::asymptotic(variant),
    )
    .unwrap()
    .rate
}

#[test]
fn sequential_and_parallel_searches_agree() {
    let exp = presets::row_a().exp.at_distance(250.0);
    let run = |exec| {
        optimize(
            &OptimizationSpec::finite().with_exec(exec),
            &exp,
            PipelineConfig::finite(1e-10),
        )
        .unwrap()
    };
    let (s, p) = (run(Execution::Sequential), run(Execution::default()));
    assert_eq!(s.rate.to_bits(), p.rate.to_bits());
    assert_eq!(s.best, p.best);
}

#[test]
fn variant_ordering() {
    let c = presets::row_c();
    for l in [100.0, 300.0, 400.0] {
        let original = best(&c, l, Variant::Original);
        let refined = best(&c, l, Variant::Refined);
        let odd = best(&c, l, Variant::OddSift);
        let aopp = best(&c, l, Variant::Aopp);
        assert!(refined >= original, "L={l}");
        assert!(aopp > odd, "L={l}: {aopp} vs {odd}");
    }
    for l in [400.0, 500.0] {
        let refined = best(&c, l, Variant::Refined);
        let bfer = best(&c, l, Variant::Bfer);
        assert!(bfer > refined, "L={l}: {bfer} vs {refined}");
    }
    assert!(best(&c, 100.0, Variant::Bfer) < best(&c, 100.0, Variant::Refined));
}

#[test]
fn analytic_pairing_matches_sampled_strings_at_an_optimum() {
    let exp = presets::row_c().exp.at_distance(300.0);
    let r = optimize(
        &OptimizationSpec::asymptotic(),
        &exp,
        PipelineConfig::asymptotic(Variant::Bfer),
    )
    .unwrap();
    let cfg = McConfig {
        len: 200_000,
        ..McConfig::default()
    };
    let runs = mcsim::verify_seeds(
        &r.evaluation.counts,
        &r.evaluation.untagged,
        &cfg,
        &[3, 4, 5],
        Execution::default(),
    )
    .unwrap();
    for run in &runs {
        assert!(run.report.passed(), "{}", run.report.to_csv());
        assert!(run.sandwich_ok);
    }
}

#[test]
fn rates_fall_with_distance_and_vanish_far_out() {
    let f = presets::row_f();
    let rates: Vec<f64> = [100.0, 200.0, 300.0, 400.0]
        .iter()
        .map(|&l| best(&f, l, Variant::Aopp))
        .collect();
    assert!(rates.windows(2).all(|w| w[1] < w[0]), "{rates:?}");
    assert_eq!(best(&presets::row_c(), 1000.0, Variant::Original), 0.0);
}
