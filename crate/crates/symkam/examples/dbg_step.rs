use symkam::gfmaps::*;
use symkam::kamcore::*;
use symkam::models::builtin;

fn main() {
    let model = builtin("twist1d").unwrap();
    let t = 0.1;
    let xi = 0.618;
    let g = from_symplectic_euler(&model, &[xi], 1e-3, t, 8, 2, 0.05, 4).unwrap();
    let sched = KamSchedule::new(
        ScheduleParams { s0: 2.0, r0: 0.05, k0: 8, gamma: 0.01, tau: 3.0, nbar: 0, mode: NondegMode::Ruessmann },
        1,
    )
    .unwrap();
    let cfg = RunConfig::default();
    let mut state = KamState::new(g, sched, &cfg);
    println!("v=0: E {:.3e} defect {:.3e}", state.current().e_norm, state.current().defect);
    for _ in 0..6 {
        match kam_step(&mut state, &cfg) {
            Ok(()) => {
                let e = state.current();
                let s = e.step.as_ref().unwrap();
                println!(
                    "v={}: E {:.3e} defect {:.3e} modes {} kfit {} recon {:.1e} repro {:.1e} dω {:.2e}",
                    e.v, e.e_norm, e.defect, e.n_modes, s.k_fit, s.extraction_recon, s.extraction_reproduction, s.omega_shift
                );
                if e.defect < cfg.target_defect { println!("converged"); break; }
            }
            Err(err) => { println!("step error: {err}"); break; }
        }
    }
}
