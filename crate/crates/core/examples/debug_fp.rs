// scratch diagnostic — not part of the repo
use benchstitch::dataset::fractional_year;
use benchstitch::stitch::{fit, FitConfig, GaugeSpec};
use benchstitch::synth::*;
use benchstitch::trends::{detect_breakpoint, frontier, CapabilityPoint};

fn main() {
    let base = SyntheticConfig {
        t_start: 2024.0, t_end: 2028.0,
        total_capability_increase: 2.2,
        n_models: 100, n_benchmarks: 10,
        benchmarks_per_model_frac: 0.5,
        t_cutoff: 2026.0,
        noise_sigma: 0.0, accel_factor: 1.0,
        ..Default::default()
    };
    for replica in 0..20u64 {
        // same child-seed scheme as false_positive_rate
        let mut z = base.seed.wrapping_add(replica.wrapping_mul(0x9E3779B97F4A7C15)).wrapping_add(0x9E3779B97F4A7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
        let seed = z ^ (z >> 31);
        let (table, _) = generate(&SyntheticConfig { seed, ..base.clone() }).unwrap();
        let mut cutoff = 2024.0 + 1.0 / 12.0;
        let mut fired_at = Vec::new();
        while cutoff <= 2028.0 {
            let visible = table.subset(|i| fractional_year(table.records()[i].model_release) <= cutoff);
            if visible.n_records() > 0 {
                if let Ok(filtered) = visible.filter_min_benchmarks(4) {
                    if filtered.n_records() > 0 {
                        let anchor = filtered.models_per_benchmark().into_iter().max_by_key(|(_, c)| *c).map(|(id, _)| id.to_string()).unwrap();
                        if let Ok(f) = fit(&filtered, &FitConfig::default(), &GaugeSpec::benchmark_anchor(anchor)) {
                            let points: Vec<CapabilityPoint> = f.params.capability.iter().map(|(id, c)| CapabilityPoint::new(id.clone(), fractional_year(filtered.model_release(id).unwrap()), *c)).collect();
                            let front = frontier(&points);
                            if front.len() >= 6 {
                                let span = front.last().unwrap().t - front[0].t;
                                if span >= 1.5 {
                                    let bp = detect_breakpoint(&front, 2.0, 3).unwrap();
                                    if bp.detected {
                                        fired_at.push((cutoff, span, front.len(), bp.ratio.unwrap(), bp.t_break));
                                    }
                                }
                            }
                        }
                    }
                }
            }
            cutoff += 1.0 / 12.0;
        }
        if !fired_at.is_empty() {
            let (c, s, n, r, tb) = fired_at[0];
            println!("replica {replica}: first fire cutoff={c:.2} span={s:.2} n_front={n} ratio={r:.2} t_break={tb:.2} (total fires {})", fired_at.len());
        }
    }
}
