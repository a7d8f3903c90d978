use std::fs;
use std::net::UdpSocket;
use std::path::Path;
use std::process::{Command, Output};
use std::sync::mpsc;
use std::thread;
use std::time::Duration;

use rtcsim::config::RunConfig;
use rtcsim::udp::{BsmDatagram, BSM_LEN};
use rtcsim_core::Channel;

fn rtcsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rtcsim")).args(args).output().expect("spawn rtcsim")
}

fn ok(args: &[&str]) -> String {
    let out = rtcsim(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn gen_writes_one_trace_per_vehicle_reproducibly() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let args = ["gen", "--topology", "disk", "--radius", "500", "--vehicles", "100", "--seed", "42", "--out"];
    let stdout = ok(&[&args[..], &[p(&a)]].concat());
    assert!(stdout.contains("100 traces"), "{stdout}");
    ok(&[&args[..], &[p(&b)]].concat());

    let mut names: Vec<String> = fs::read_dir(&a).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
    names.sort();
    assert_eq!(names.len(), 101);
    assert!(names.contains(&"manifest.json".to_string()));
    for n in &names {
        assert_eq!(fs::read(a.join(n)).unwrap(), fs::read(b.join(n)).unwrap(), "{n}");
    }
}

#[test]
fn zero_vehicles_is_a_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = rtcsim(&["gen", "--vehicles", "0", "--out", p(tmp.path())]);
    assert_eq!(out.status.code(), Some(2));
    assert!(fs::read_dir(tmp.path()).unwrap().next().is_none());
}

#[test]
fn config_errors_exit_2() {
    for bad in [["--set", "mac.cw_min=lots"], ["--set", "mac.no_such_key=1"], ["--set", "run.mode=realtime"]] {
        let out = rtcsim(&[&["run", "--dump-config"][..], &bad[..]].concat());
        assert_eq!(out.status.code(), Some(2), "{bad:?}");
    }
    assert_eq!(rtcsim(&["run", "--mode", "warp"]).status.code(), Some(2));
    assert_eq!(rtcsim(&["run", "--config", "/nonexistent/rtcsim.toml"]).status.code(), Some(2));
}

#[test]
fn missing_trace_dir_exits_1() {
    let tmp = tempfile::tempdir().unwrap();
    let out = rtcsim(&["run", "--scenario-dir", p(&tmp.path().join("nope")), "--out", p(&tmp.path().join("o"))]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn batch_run_writes_outputs_and_repeats_byte_for_byte() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let args = ["run", "--topology", "disk", "--vehicles", "100", "--duration", "5", "--out"];
    let stdout = ok(&[&args[..], &[p(&a)]].concat());
    assert!(stdout.lines().any(|l| l.starts_with("disk") && l.contains("three_log_distance")), "{stdout}");
    ok(&[&args[..], &[p(&b)]].concat());
    for f in ["events.csv", "series.csv", "summary.csv", "summary.txt", "timing.csv"] {
        assert!(a.join(f).is_file(), "{f}");
    }
    for f in ["events.csv", "series.csv", "summary.csv", "summary.txt"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let series = fs::read_to_string(a.join("series.csv")).unwrap();
    assert_eq!(series.lines().filter(|l| l.starts_with("cbp,")).count(), 50);
    assert!(series.lines().any(|l| l.starts_with("per,")));
    assert!(series.lines().any(|l| l.starts_with("rss,")));
}

#[test]
fn traces_on_disk_replay_the_generated_run() {
    let tmp = tempfile::tempdir().unwrap();
    let (traces, direct, replay) = (tmp.path().join("t"), tmp.path().join("d"), tmp.path().join("r"));
    let common = ["--topology", "linear", "--vehicles", "60", "--duration", "3", "--seed", "5"];
    ok(&[&["gen"][..], &common[..], &["--out", p(&traces)]].concat());
    ok(&[&["run"][..], &common[..], &["--out", p(&direct)]].concat());
    ok(&["run", "--scenario-dir", p(&traces), "--seed", "5", "--out", p(&replay)]);
    assert_eq!(fs::read(direct.join("events.csv")).unwrap(), fs::read(replay.join("events.csv")).unwrap());
}

#[test]
fn dump_config_round_trips() {
    let tmp = tempfile::tempdir().unwrap();
    let dumped = ok(&["run", "--dump-config", "--seed", "9", "--channel", "fowlerville", "--set", "mac.cw_min=7", "--null-sink"]);
    let path = tmp.path().join("c.toml");
    fs::write(&path, &dumped).unwrap();
    assert_eq!(ok(&["run", "--dump-config", "--config", p(&path)]), dumped);
    let cfg = RunConfig::from_toml_with(&dumped, &[]).unwrap();
    assert_eq!(cfg.scenario.seed, 9);
    assert_eq!(cfg.mac.cw_min, 7);
    assert!(cfg.run.null_sink);
    assert_eq!(cfg.profile_name(), "fowlerville");
    assert_eq!(RunConfig::from_toml_with(&cfg.to_toml(), &[]).unwrap(), cfg);
}

#[test]
fn rss_output_reparses_to_direct_calls() {
    let stdout = ok(&["rss", "--d-min", "1", "--d-max", "1000", "--step", "1"]);
    let mut lines = stdout.lines();
    assert_eq!(lines.next(), Some("distance_m,rss_dbm"));
    let ch = Channel::default();
    let rows: Vec<(f64, f64)> = lines
        .map(|l| {
            let (d, r) = l.split_once(',').unwrap();
            (d.parse().unwrap(), r.parse().unwrap())
        })
        .collect();
    assert_eq!(rows.len(), 1000);
    for (d, r) in &rows {
        assert_eq!(*r, ch.rss_dbm(*d).unwrap(), "d = {d}");
    }
    for bp in [200.0, 500.0] {
        let i = rows.iter().position(|(d, _)| *d == bp).unwrap();
        assert!((rows[i - 1].1 - rows[i].1).abs() < 0.1 && (rows[i].1 - rows[i + 1].1).abs() < 0.1);
    }

    let tmp = tempfile::tempdir().unwrap();
    ok(&["rss", "--channel", "fowlerville", "--out", p(tmp.path())]);
    assert!(fs::read_to_string(tmp.path().join("rss.csv")).unwrap().starts_with("distance_m,rss_dbm\n"));
}

#[test]
fn realtime_udp_loopback_delivers_each_decoded_event() {
    let listener = UdpSocket::bind("127.0.0.1:0").unwrap();
    listener.set_read_timeout(Some(Duration::from_millis(200))).unwrap();
    let addr = listener.local_addr().unwrap().to_string();
    let (stop_tx, stop_rx) = mpsc::channel::<()>();
    let rx_thread = thread::spawn(move || {
        let mut got = Vec::new();
        let mut buf = [0u8; 128];
        loop {
            match listener.recv(&mut buf) {
                Ok(n) => {
                    assert_eq!(n, BSM_LEN);
                    got.push(BsmDatagram::decode(&buf[..n]).expect("valid datagram"));
                }
                Err(_) if stop_rx.try_recv().is_ok() => return got,
                Err(_) => {}
            }
        }
    });

    let tmp = tempfile::tempdir().unwrap();
    let out = p(tmp.path());
    ok(&["run", "--mode", "realtime", "--emit-udp", &addr, "--vehicles", "30", "--radius", "300", "--duration", "1", "--out", out]);
    thread::sleep(Duration::from_millis(300));
    stop_tx.send(()).unwrap();
    let got = rx_thread.join().unwrap();

    let events = fs::read_to_string(tmp.path().join("events.csv")).unwrap();
    let decoded: Vec<(f64, u32)> = events
        .lines()
        .skip(1)
        .filter(|l| l.split(',').nth(3) == Some("decoded"))
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[1].parse().unwrap(), f[4].parse().unwrap())
        })
        .collect();
    assert!(!decoded.is_empty());
    assert_eq!(got.len(), decoded.len());
    for (d, (end_s, winner)) in got.iter().zip(&decoded) {
        assert_eq!(d.vehicle_id, *winner);
        assert!(d.gen_time_s <= *end_s);
    }
    assert!(decoded.windows(2).all(|w| w[0].0 <= w[1].0), "delivery times not monotone");

    let timing = fs::read_to_string(tmp.path().join("timing.csv")).unwrap();
    let p99 = timing.lines().nth(1).unwrap().rsplit(',').next().unwrap();
    assert!(!p99.is_empty());

    let again = tempfile::tempdir().unwrap();
    ok(&["run", "--mode", "realtime", "--null-sink", "--vehicles", "30", "--radius", "300", "--duration", "1", "--out", p(again.path())]);
    assert_eq!(fs::read_to_string(again.path().join("events.csv")).unwrap(), events);
}

#[test]
fn six_scenario_script_reports_eighteen_rows() {
    let tmp = tempfile::tempdir().unwrap();
    let script = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scripts/six_scenarios.sh");
    let out = Command::new("bash")
        .arg(script)
        .env("RTCSIM", env!("CARGO_BIN_EXE_rtcsim"))
        .env("OUT", tmp.path())
        .env("DURATION", "0.5")
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let summary = fs::read_to_string(tmp.path().join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 1 + 18);
    let tables = String::from_utf8(out.stdout).unwrap();
    assert!(tables.contains("Average CBP (%)") && tables.contains("Average PER (%)"));
    for topo in ["Disk", "Linear", "Intersection"] {
        assert!(tables.lines().any(|l| l.starts_with(topo)), "{topo}\n{tables}");
    }
    let header = tables.lines().nth(1).unwrap();
    assert!(header.find("Fowlerville").unwrap() < header.find("Three log distance").unwrap());
    assert!(!tables.contains(" -"), "every cell filled:\n{tables}");
}
