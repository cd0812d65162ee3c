use noilc_arm::config::*;
use noilc_arm::harness::*;

fn main() {
    let mut cfg = ExperimentConfig::default();
    cfg.experiment.iterations = 30;
    cfg.gains = GainsSection { k_ff_pa: 0.35e5, k_p_pa: 0.3e5, k_i_pa: 0.2e5, k_d_pa: -0.02e5 };
    cfg.coupling.gamma = 0.45;
    cfg.valves.b_crit = 0.2;
    let setup = cfg.resolve(None).unwrap();
    let records = run_experiment(&setup).unwrap();
    let ts = setup.t_outer;
    println!("=== iteration 0 around jump@3.6 (-60deg) ===");
    println!("   t    y_des_deg   y_deg    adot    p_a_bar  p_b_bar  u_tot_bar");
    let r0 = &records[0];
    for k in 178..=215 {
        println!("{:5.2} {:9.2} {:8.2} {:8.3} {:8.3} {:8.3} {:8.3}",
            (k + 1) as f64 * ts,
            r0.y_des[k].to_degrees() * std::f64::consts::PI / std::f64::consts::PI * setup.norms.angle_scale.to_degrees() / setup.norms.angle_scale / 1.0 * (180.0/std::f64::consts::PI) * setup.norms.angle_scale / (180.0/std::f64::consts::PI) / setup.norms.angle_scale * setup.norms.angle_scale.to_degrees(),
            r0.y[k] * setup.norms.angle_scale.to_degrees(),
            r0.alpha_dot[k],
            r0.p_a[k] / 1e5, r0.p_b[k] / 1e5, r0.u_tot[k] / 1e5);
    }
}
