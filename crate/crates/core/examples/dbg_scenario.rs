// debug: scenario internals visibility
use relaysim::scenario::*;
use relaysim::signal::IQFrame;

fn main() {
    let mut config = ScenarioConfig::from_toml(&reference_config_toml()).unwrap();
    config.timeline.time_scale = 0.1;
    debug_run(&config);
}

// Reimplements a slice of the pipeline with prints: ARX words out, regen state.
fn debug_run(config: &ScenarioConfig) {
    use relaysim::receiver::*;
    use relaysim::regen::*;
    use relaysim::relay::*;
    use relaysim::scenario::sky::SkyModel;
    use relaysim::signal::combine;

    let fs = config.sim.sample_rate_hz;
    let block_len = (fs * 0.1).round() as usize;
    let noise = 10f64.powf(-config.sim.cn0_dbhz / 10.0);
    let mut arx_sky = SkyModel::new(&config.constellation, config.seed, noise, config.seed ^ 0x4152_5800);
    let mut victim_sky = SkyModel::new(&config.constellation, config.seed, noise, config.seed ^ 0x5649_4354);

    let mut rc = ReceiverConfig::new(fs);
    rc.search_prns = config.constellation_prns();
    let mut arx = SdrReceiver::new(rc.clone());
    let mut regen = RegenState::new(1, RegenConfig {
        sample_rate_hz: fs,
        gain_db: config.attack.gain_db,
        step_limit_m: 1.0, step_limit_enabled: true, step_interval_s: 0.1,
        stream_delay_margin_s: 0.7,
    });
    let table = AssignmentTable::new(0, [(1u16, config.constellation_prns().into_iter().collect())].into());
    regen.apply_message(&RelayMessage::Assignment(table), 0.0).unwrap();

    // victim receiver raw (no state machine) started at capture time
    let mut vic = SdrReceiver::new(ReceiverConfig::new(fs));
    let mut vic_started = false;

    let mut words_sent = 0u64;
    let t_replay = 21.5;
    let n_blocks = 340;
    for k in 0..n_blocks {
        let start = k as u64 * block_len as u64;
        let t0 = start as f64 / fs;
        let (pos, vel) = config.arx_state_at(t0);
        let arx_frame = arx_sky.window(start, block_len, fs, pos, vel);
        if arx.tracked_prns().len() < 8 && k % 20 == 0 {
            arx.acquire_untracked(&arx_frame);
        }
        let out = arx.process_block(&arx_frame);
        for epoch in &out.epochs {
            if let Ok(ex) = arx.extract_params(epoch) {
                regen.apply_message(&RelayMessage::PvtState {
                    tow_ms: ex.tow_ms,
                    position_ecef: ex.pvt.position_ecef,
                    velocity_ecef: ex.pvt.velocity_ecef,
                    clock_bias_s: ex.pvt.clock_bias_s,
                    residual_rms_m: ex.pvt.residual_rms_m as f32,
                    fix_valid: ex.pvt.fix_valid,
                }, t0).unwrap();
                for w in &ex.nav_words {
                    words_sent += 1;
                    let bits: Vec<u8> = (0..30).map(|j| ((w.bits >> (29 - j)) & 1) as u8).collect();
                    regen.apply_message(&RelayMessage::NavBits {
                        tow_ms: ex.tow_ms, prn: w.prn, first_bit_index: w.stream_bit_index, bits,
                    }, t0).unwrap();
                }
            }
        }
        if t0 + 0.1 <= t_replay { continue; }
        let (spoof, events) = regen.regen_step(start, block_len, &config.constellation, k);
        if k % 10 == 0 {
            println!("t={t0:.1} arx_tracked={} words_sent={words_sent} regen_delay={:?} muted={}",
                arx.tracked_prns().len(), regen.stream_delay_s(), events.len());
        }
        // victim sees legit + spoof
        let legit = victim_sky.window(start, block_len, fs, config.victim.position_ecef, [0.0;3]);
        let combined = combine(&[legit, spoof]).unwrap();
        if !vic_started { vic.acquire_untracked(&combined); vic_started = true; }
        let vout = vic.process_block(&combined);
        if k % 10 == 0 {
            for ch in vic.channels() {
                print!("  prn{} lock(c{} b{} f{}) cn0={:.0} bits={}",
                    ch.prn, ch.lock.code as u8, ch.lock.bit as u8, ch.lock.frame as u8, ch.cn0_dbhz, ch.bit_buffer().len());
            }
            println!();
        }
        for e in &vout.epochs {
            if let Some(s) = e.solution {
                let (ap, _) = config.arx_state_at(e.t_s);
                let err = ((s.position_ecef[0]-ap[0]).powi(2)+(s.position_ecef[1]-ap[1]).powi(2)+(s.position_ecef[2]-ap[2]).powi(2)).sqrt();
                println!("t={:.1} FIX err={err:.2} m bias={:.4} resid={:.2} nsats={}",
                    e.t_s, s.clock_bias_s, s.residual_rms_m, s.num_sats);
            }
        }
        let _ = IQFrame::zeroed(0, fs, 0);
    }
    println!("no victim fix");
}
