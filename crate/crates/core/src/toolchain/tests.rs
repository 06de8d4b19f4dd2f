use std::collections::BTreeMap;
use std::sync::Mutex;
use std::time::Duration;

use tempfile::tempdir;

use super::*;
use crate::bench_model::{BugType, CommitId, Reproducer};

/// A 16-frame crash dump shaped like a real optimizer stack trace: signal
/// plumbing on top, the faulting transform in the middle, pass-manager
/// dispatch and process startup at the bottom.
pub const CRASH_TRACE_FIXTURE: &str = "\
opt: ../lib/Transforms/Vectorize/SLPVectorizer.cpp:9699: InstructionCost getEntryCost(...): Assertion `VecTy' failed.
PLEASE submit a bug report to https://github.com/llvm/llvm-project/issues/
Stack dump:
 #0 0x00005610f2a1d3b8 llvm::sys::PrintStackTrace(llvm::raw_ostream&, int)
 #1 0x00005610f2a1a8e4 llvm::sys::RunSignalHandlers()
 #2 0x00005610f2a1db06 SignalHandler(int)
 #3 0x00007f2ab425c520 __restore_rt
 #4 0x00007f2ab42b09fc raise
 #5 0x00007f2ab425c476 abort
 #6 0x00007f2ab42427f3 __assert_fail
 #7 0x00005610f1c2e91a llvm::slpvectorizer::BoUpSLP::getEntryCost(llvm::slpvectorizer::BoUpSLP::TreeEntry const*, llvm::ArrayRef<llvm::Value*>) llvm/lib/Transforms/Vectorize/SLPVectorizer.cpp:9699:12
 #8 0x00005610f1c31577 llvm::slpvectorizer::BoUpSLP::getTreeCost(llvm::ArrayRef<llvm::Value*>) llvm/lib/Transforms/Vectorize/SLPVectorizer.cpp:10381:30
 #9 0x00005610f1c35a02 llvm::SLPVectorizerPass::tryToVectorizeList(llvm::ArrayRef<llvm::Value*>, llvm::slpvectorizer::BoUpSLP&, bool) llvm/lib/Transforms/Vectorize/SLPVectorizer.cpp:17012:25
 #10 0x00005610f1c37f44 llvm::SLPVectorizerPass::run(llvm::Function&, llvm::FunctionAnalysisManager&) llvm/lib/Transforms/Vectorize/SLPVectorizer.cpp:16450:15
 #11 0x00005610f1f0222e llvm::detail::PassModel<llvm::Function, llvm::SLPVectorizerPass, llvm::AnalysisManager<llvm::Function>>::run(llvm::Function&, llvm::AnalysisManager<llvm::Function>&)
 #12 0x00005610f23f5cbd llvm::PassManager<llvm::Function, llvm::AnalysisManager<llvm::Function>>::run(llvm::Function&, llvm::AnalysisManager<llvm::Function>&)
 #13 0x00005610f1f021fe llvm::ModuleToFunctionPassAdaptor::run(llvm::Module&, llvm::AnalysisManager<llvm::Module>&)
 #14 0x00005610f29c7bfa main
 #15 0x00007f2ab4243d90 __libc_start_main
";

pub const MISCOMPILE_REFUTATION_FIXTURE: &str = "\
----------------------------------------
define half @src(half noundef %x) {
  %f = call half @llvm.fabs.f16(half %x)
  ret half %f
}
=>
define half @src(half noundef %x) {
  ret half %x
}
Transformation doesn't verify!

ERROR: Value mismatch

Example:
half noundef %x = #x8001 (0xfffep-24, -0.000000059574)

Source value: #x0001 (0x2p-24, 0.000000059604)
Target value: #x8001 (0xfffep-24, -0.000000059574)
";

fn commit_a() -> CommitId {
    CommitId::new("9a8b0407fc16af4ca6f79a2583297318a645d88a").unwrap()
}

fn rep() -> Reproducer {
    Reproducer::new(
        "define void @f() { ret void }\n",
        vec!["-passes=slp-vectorizer".to_string(), "-S".to_string()],
    )
    .unwrap()
}

#[test]
fn exec_keys_hash_stably_and_distinctly() {
    let k1 = ExecKey::new("abc", "opt", vec!["-S".into()], b"ir");
    let k2 = ExecKey::new("abc", "opt", vec!["-S".into()], b"ir");
    let k3 = ExecKey::new("abc", "opt", vec!["-O2".into()], b"ir");
    let k4 = ExecKey::new("abc", "opt", vec!["-S".into()], b"other ir");
    assert_eq!(k1.digest(), k2.digest());
    assert_ne!(k1.digest(), k3.digest());
    assert_ne!(k1.digest(), k4.digest());
    assert_eq!(k1.digest().len(), 64);
}

#[test]
fn fixture_store_round_trips_transcripts() {
    let dir = tempdir().unwrap();
    let store = FixtureStore::open(dir.path()).unwrap();
    let key = ExecKey::new("abc", "opt", vec!["-S".into()], b"ir");
    let transcript = Transcript {
        stdout: b"module out".to_vec(),
        stderr: b"warning: x".to_vec(),
        exit_code: 3,
        timed_out: true,
    };
    assert!(!store.contains(&key));
    store.save(&key, &transcript).unwrap();
    assert!(store.contains(&key));
    assert_eq!(store.load(&key).unwrap(), Some(transcript));
}

#[test]
fn record_then_replay_round_trips() {
    struct CountingExec(Mutex<u32>);
    impl Exec for CountingExec {
        fn exec(&self, req: &ExecRequest) -> Result<Transcript, ExecError> {
            *self.0.lock().unwrap() += 1;
            Ok(Transcript::ok(
                format!("ran {}", req.key.tool),
                Vec::new(),
            ))
        }
    }

    let dir = tempdir().unwrap();
    let store = FixtureStore::open(dir.path()).unwrap();
    let recorder = RecordingExec::new(CountingExec(Mutex::new(0)), store.clone());
    let req = ExecRequest::new("abc", "opt", vec!["-S".into()], b"ir", Duration::from_secs(5));
    let live = recorder.exec(&req).unwrap();
    assert_eq!(live.stdout_text(), "ran opt");

    let replay = ReplayExec::new(store);
    let replayed = replay.exec(&req).unwrap();
    assert_eq!(replayed, live);

    let other = ExecRequest::new("abc", "opt", vec!["-O2".into()], b"ir", Duration::from_secs(5));
    let err = replay.exec(&other).unwrap_err();
    assert!(matches!(err, ExecError::MissingTranscript { tool, .. } if tool == "opt"));
}

#[test]
fn subprocess_exec_runs_and_times_out() {
    let commands = BTreeMap::from([
        (
            "echoer".to_string(),
            ToolCommand {
                program: "sh".to_string(),
                args_prefix: vec![
                    "-c".to_string(),
                    "cat > /dev/null; echo out; echo err >&2".to_string(),
                ],
            },
        ),
        (
            "sleeper".to_string(),
            ToolCommand {
                program: "sh".to_string(),
                // the trailing echo keeps sh from exec-ing sleep, so the
                // timeout has to take out a whole process group
                args_prefix: vec!["-c".to_string(), "sleep 30; echo x".to_string()],
            },
        ),
    ]);
    let exec = SubprocessExec::new(commands);

    let req = ExecRequest::new("fp", "echoer", Vec::new(), b"in", Duration::from_secs(10));
    let t = exec.exec(&req).unwrap();
    assert!(t.succeeded());
    assert_eq!(t.stdout_text(), "out\n");
    assert_eq!(t.stderr_text(), "err\n");

    let req = ExecRequest::new("fp", "sleeper", Vec::new(), b"", Duration::from_millis(100));
    let t = exec.exec(&req).unwrap();
    assert!(t.timed_out);
    assert!(!t.succeeded());

    let req = ExecRequest::new("fp", "nope", Vec::new(), b"", Duration::from_secs(1));
    assert_eq!(
        exec.exec(&req).unwrap_err(),
        ExecError::UnknownTool("nope".to_string())
    );
}

#[test]
fn parses_and_filters_crash_trace() {
    let trace = parse_stack_trace(CRASH_TRACE_FIXTURE).unwrap();
    assert_eq!(trace.frames.len(), 16);
    assert_eq!(trace.frames[0].symbol, "llvm::sys::PrintStackTrace(llvm::raw_ostream&, int)");
    assert_eq!(
        trace.frames[7].location.as_deref(),
        Some("llvm/lib/Transforms/Vectorize/SLPVectorizer.cpp:9699:12")
    );

    let denylist: Vec<String> = DEFAULT_FRAME_DENYLIST.iter().map(|s| s.to_string()).collect();
    let filtered = filter_stack_trace(&trace, &denylist).unwrap();
    let indices: Vec<u32> = filtered.frames.iter().map(|f| f.index).collect();
    assert_eq!(indices, vec![7, 8, 9, 10]);
    assert!(filtered.frames[0].symbol.contains("BoUpSLP::getEntryCost"));

    let rendered = render_stack_trace(&filtered);
    assert!(rendered.starts_with(" #7 "));
    assert_eq!(rendered.lines().count(), 4);
}

#[test]
fn fully_noise_trace_reports_no_frames() {
    let noise = "\
 #0 0x01 llvm::sys::PrintStackTrace(llvm::raw_ostream&, int)
 #1 0x02 raise
 #2 0x03 main
";
    let trace = parse_stack_trace(noise).unwrap();
    let denylist: Vec<String> = DEFAULT_FRAME_DENYLIST.iter().map(|s| s.to_string()).collect();
    assert_eq!(filter_stack_trace(&trace, &denylist), Err(NoFramesRetained));
    assert_eq!(parse_stack_trace("no frames here"), None);
}

#[test]
fn classifies_validator_output() {
    assert_eq!(
        classify_validator_output("... Transformation seems to be correct!\n"),
        ValidatorVerdict::Correct
    );

    match classify_validator_output(MISCOMPILE_REFUTATION_FIXTURE) {
        ValidatorVerdict::DoesntVerify(report) => {
            assert_eq!(report.error, "Value mismatch");
            assert_eq!(report.example_bindings.len(), 1);
            assert!(report.example_bindings[0].0.contains("%x"));
            assert!(report.example_bindings[0].1.starts_with("#x8001"));
            assert!(report.source_value.starts_with("#x0001"));
            assert!(report.target_value.starts_with("#x8001"));
        }
        other => panic!("expected refutation, got {other:?}"),
    }

    assert!(matches!(
        classify_validator_output("solver timed out"),
        ValidatorVerdict::Unknown(_)
    ));
    // refutation marker without a usable counterexample degrades to Unknown
    assert!(matches!(
        classify_validator_output("Transformation doesn't verify!\n"),
        ValidatorVerdict::Unknown(_)
    ));
}

#[test]
fn parses_lit_output() {
    let out = "\
PASS: LLVM :: Transforms/InstSimplify/fast-math.ll (1 of 5)
PASS: LLVM :: Transforms/InstSimplify/fabs.ll (2 of 5)
FAIL: LLVM :: Transforms/InstSimplify/select.ll (3 of 5)
XFAIL: LLVM :: Transforms/InstSimplify/known-bug.ll (4 of 5)
UNSUPPORTED: LLVM :: Transforms/InstSimplify/target-specific.ll (5 of 5)
";
    let summary = parse_lit_output(out);
    assert_eq!(summary.passed, 2);
    assert_eq!(summary.failed, 1);
    assert_eq!(
        summary.failures,
        vec!["LLVM :: Transforms/InstSimplify/select.ll (3 of 5)"]
    );
    assert!(!summary.all_passed());
    assert!(parse_lit_output("").all_passed());
}

#[test]
fn test_scope_tokens() {
    assert_eq!(
        TestScope::Component("InstSimplify".into()).tokens(),
        vec!["component:InstSimplify"]
    );
    assert_eq!(TestScope::AllMiddleEnd.tokens(), vec!["all-middle-end"]);
    assert_eq!(
        TestScope::Paths(vec!["a/b.ll".into(), "c.ll".into()]).tokens(),
        vec!["path:a/b.ll", "path:c.ll"]
    );
}

/// Table-driven executor for facade tests: maps (tool, fingerprint) to a
/// transcript.
struct TableExec {
    table: BTreeMap<(String, String), Transcript>,
}

impl Exec for TableExec {
    fn exec(&self, req: &ExecRequest) -> Result<Transcript, ExecError> {
        self.table
            .get(&(req.key.tool.clone(), req.key.fingerprint.clone()))
            .cloned()
            .ok_or_else(|| ExecError::MissingTranscript {
                digest: req.key.digest(),
                tool: req.key.tool.clone(),
                argv: req.key.argv.clone(),
            })
    }
}

fn toolchain_with(
    table: BTreeMap<(String, String), Transcript>,
    snapshot_root: &std::path::Path,
) -> Toolchain {
    Toolchain::new(
        Box::new(TableExec { table }),
        Box::new(NoDebugger),
        ToolchainConfig::default(),
        snapshot_root,
    )
}

#[test]
fn build_requires_snapshot_and_fingerprints_patches() {
    let dir = tempdir().unwrap();
    let commit = commit_a();
    std::fs::create_dir_all(dir.path().join(commit.as_str())).unwrap();

    let patched_fp = patched_fingerprint(&commit, "some patch");
    let table = BTreeMap::from([
        (
            ("build".to_string(), commit.to_string()),
            Transcript::ok(b"built".to_vec(), Vec::new()),
        ),
        (
            ("build".to_string(), patched_fp.clone()),
            Transcript::failed(1, Vec::new(), b"undefined symbol: Foo".to_vec()),
        ),
    ]);
    let tc = toolchain_with(table, dir.path());

    let handle = tc.build(&commit, None).unwrap().ready().unwrap();
    assert_eq!(handle.fingerprint, commit.to_string());

    match tc.build(&commit, Some("some patch")).unwrap() {
        BuildOutcome::Failed { log } => assert!(log.contains("undefined symbol")),
        other => panic!("expected failed build, got {other:?}"),
    }
    assert!(patched_fp.starts_with(&format!("{commit}+")));

    let unknown = CommitId::new("beefbeefbeefbeefbeefbeefbeefbeefbeefbeef").unwrap();
    assert!(matches!(
        tc.build(&unknown, None),
        Err(ToolchainError::UnknownCommit(_))
    ));
}

#[test]
fn probe_reports_crash_with_retained_frames() {
    let dir = tempdir().unwrap();
    let commit = commit_a();
    std::fs::create_dir_all(dir.path().join(commit.as_str())).unwrap();
    let table = BTreeMap::from([(
        ("opt".to_string(), commit.to_string()),
        Transcript::failed(134, Vec::new(), CRASH_TRACE_FIXTURE.as_bytes().to_vec()),
    )]);
    let tc = toolchain_with(table, dir.path());
    let handle = BuildHandle {
        commit: commit.clone(),
        fingerprint: commit.to_string(),
    };

    let probe = tc.probe(&handle, BugType::Crash, &rep()).unwrap();
    match probe {
        ReproProbe::Reproduced(Evidence::Crash { frames, fully_filtered, raw }) => {
            assert!(!fully_filtered);
            assert!(frames[0].symbol.contains("getEntryCost"));
            assert_eq!(frames.len(), 4);
            assert!(raw.contains("Stack dump"));
        }
        other => panic!("expected crash evidence, got {other:?}"),
    }
}

#[test]
fn probe_clean_run_is_not_reproduced() {
    let dir = tempdir().unwrap();
    let commit = commit_a();
    std::fs::create_dir_all(dir.path().join(commit.as_str())).unwrap();
    let table = BTreeMap::from([(
        ("opt".to_string(), commit.to_string()),
        Transcript::ok(b"define void @f() { ret void }\n".to_vec(), Vec::new()),
    )]);
    let tc = toolchain_with(table, dir.path());
    let handle = BuildHandle {
        commit: commit.clone(),
        fingerprint: commit.to_string(),
    };
    assert!(matches!(
        tc.probe(&handle, BugType::Crash, &rep()).unwrap(),
        ReproProbe::NotReproduced
    ));
}

#[test]
fn probe_miscompile_consults_validator() {
    let dir = tempdir().unwrap();
    let commit = commit_a();
    std::fs::create_dir_all(dir.path().join(commit.as_str())).unwrap();
    let opt_out = Transcript::ok(b"define half @src(half noundef %x) { ret half %x }\n".to_vec(), Vec::new());

    let refuted = BTreeMap::from([
        (("opt".to_string(), commit.to_string()), opt_out.clone()),
        (
            ("alive-tv".to_string(), commit.to_string()),
            Transcript::ok(MISCOMPILE_REFUTATION_FIXTURE.as_bytes().to_vec(), Vec::new()),
        ),
    ]);
    let tc = toolchain_with(refuted, dir.path());
    let handle = BuildHandle {
        commit: commit.clone(),
        fingerprint: commit.to_string(),
    };
    match tc.probe(&handle, BugType::Miscompilation, &rep()).unwrap() {
        ReproProbe::Reproduced(Evidence::Miscompile { counterexample }) => {
            assert!(counterexample.target_value.starts_with("#x8001"));
        }
        other => panic!("expected miscompile evidence, got {other:?}"),
    }

    let verified = BTreeMap::from([
        (("opt".to_string(), commit.to_string()), opt_out),
        (
            ("alive-tv".to_string(), commit.to_string()),
            Transcript::ok(b"Transformation seems to be correct!\n".to_vec(), Vec::new()),
        ),
    ]);
    let tc = toolchain_with(verified, dir.path());
    assert!(matches!(
        tc.probe(&handle, BugType::Miscompilation, &rep()).unwrap(),
        ReproProbe::NotReproduced
    ));
}

#[test]
fn evidence_kind_matching() {
    let crash = Evidence::Crash {
        frames: Vec::new(),
        fully_filtered: false,
        raw: String::new(),
    };
    assert!(crash.matches(BugType::Crash));
    assert!(!crash.matches(BugType::Miscompilation));
}

#[test]
fn scripted_debugger_answers_from_table() {
    let script = DebugScript {
        responses: BTreeMap::from([
            (
                "break BoUpSLP::getEntryCost".to_string(),
                "Breakpoint 1 at getEntryCost".to_string(),
            ),
            ("run".to_string(), "Breakpoint 1 hit".to_string()),
        ]),
        fallback: Some("nothing scripted".to_string()),
    };
    let factory =
        ScriptedDebuggerFactory::new(BTreeMap::from([("fp1".to_string(), script)]));
    let mut session = factory.start("fp1", &[], "").unwrap();
    assert_eq!(
        session.run_command("break BoUpSLP::getEntryCost").unwrap(),
        "Breakpoint 1 at getEntryCost"
    );
    assert_eq!(session.run_command("p VecTy").unwrap(), "nothing scripted");

    assert!(matches!(
        factory.start("unknown-fp", &[], ""),
        Err(DebugError::NotAvailable(_))
    ));
}
