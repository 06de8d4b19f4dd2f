//! In-memory compiler behind the `Exec` seam: deterministic builds, optimizer
//! runs, translation validation, and regression tests for the demo world.

use std::collections::BTreeMap;
use std::sync::Mutex;

use crate::diffscope::{apply_diff_to_tree, parse_unified_diff};
use crate::toolchain::{Exec, ExecError, ExecRequest, Transcript, VALIDATOR_INPUT_SEPARATOR};

use super::{
    DemoWorld, BREAKS_COMPONENT_TESTS_MARKER, BREAKS_MIDDLE_END_TESTS_MARKER,
    CMAKELISTS_FILE, COMPONENT_FILES, FABS_BUG_MARKER, FABS_MISCOMPILED_IR, GVN_BUG_MARKER,
    GVN_FILE, INSTSIMPLIFY_FILE, LOOPPEEL_FILE, PEEL_BUG_MARKER, SLP_BUG_MARKER, SLP_FILE,
};

/// Regression-test counts per component in the demo world.
const COMPONENT_TEST_COUNTS: &[(&str, usize)] = &[
    ("SLPVectorizer", 14),
    ("InstSimplify", 12),
    ("LoopUnroll", 10),
    ("InstCombine", 16),
    ("GVN", 11),
    ("ValueTracking", 8),
];

/// Extra suite only exercised by the broad middle-end scope.
const MIDDLE_END_SMOKE_COUNT: usize = 9;

type Tree = BTreeMap<String, String>;

/// Implements the toolchain's `Exec` interface over [`DemoWorld`] trees.
///
/// Builds clone the base tree, apply the patch from stdin, and fail on
/// `#error` markers or a missing top-level CMake file. Optimizer behavior is
/// keyed on the reproducer's entry function name and on whether the
/// corresponding buggy code is still present in the built tree.
pub struct SimulatedCompiler {
    world: DemoWorld,
    built: Mutex<BTreeMap<String, Tree>>,
}

impl SimulatedCompiler {
    pub fn new(world: DemoWorld) -> Self {
        SimulatedCompiler {
            world,
            built: Mutex::new(BTreeMap::new()),
        }
    }

    /// The source tree a fingerprint runs against. Pristine commits resolve
    /// directly; patched fingerprints must have been built first.
    fn tree_for(&self, fingerprint: &str) -> Option<Tree> {
        if let Some(tree) = self
            .built
            .lock()
            .expect("simulator cache lock")
            .get(fingerprint)
        {
            return Some(tree.clone());
        }
        if !fingerprint.contains('+') {
            return self.world.tree(fingerprint).cloned();
        }
        None
    }

    fn build(&self, fingerprint: &str, stdin: &[u8]) -> Transcript {
        let commit = fingerprint.split('+').next().unwrap_or(fingerprint);
        let Some(base) = self.world.tree(commit) else {
            return Transcript::failed(
                1,
                "",
                format!("CMake Error: no source snapshot for commit {commit}\n"),
            );
        };
        let mut tree = base.clone();

        if fingerprint.contains('+') {
            let patch_text = String::from_utf8_lossy(stdin).into_owned();
            let diff = match parse_unified_diff(&patch_text) {
                Ok(d) => d,
                Err(e) => {
                    return Transcript::failed(1, "", format!("error: corrupt patch: {e}\n"))
                }
            };
            if let Err(e) = apply_diff_to_tree(&diff, &mut tree) {
                return Transcript::failed(1, "", format!("error: patch failed: {e}\n"));
            }
        }

        if !tree.contains_key(CMAKELISTS_FILE) {
            return Transcript::failed(
                1,
                "",
                format!("CMake Error: {CMAKELISTS_FILE} has been removed; configuration failed\n"),
            );
        }
        for (path, content) in &tree {
            if content.contains("#error") {
                return Transcript::failed(
                    1,
                    format!("[214/2450] Building CXX object {path}.o\n"),
                    format!(
                        "FAILED: {path}.o\n\
                         {path}:2:2: error: work in progress\n\
                         ninja: build stopped: subcommand failed.\n"
                    ),
                );
            }
        }

        self.built
            .lock()
            .expect("simulator cache lock")
            .insert(fingerprint.to_string(), tree);
        Transcript::ok(
            "[2450/2450] Linking CXX executable bin/opt\nBuild completed.\n",
            "",
        )
    }

    fn opt(&self, fingerprint: &str, argv: &[String], stdin: &[u8]) -> Result<Transcript, ExecError> {
        let tree = self.tree_for(fingerprint).ok_or_else(|| ExecError::Spawn {
            tool: "opt".to_string(),
            reason: format!("no completed build for fingerprint {fingerprint}"),
        })?;
        let input = String::from_utf8_lossy(stdin).into_owned();

        if !input.contains("define ") {
            return Ok(Transcript::failed(
                1,
                "",
                "opt: <stdin>:1:1: error: expected top-level entity\n",
            ));
        }

        let marker_present = |path: &str, marker: &str| {
            tree.get(path).map(|c| c.contains(marker)).unwrap_or(false)
        };

        // Scenario dispatch on the entry function name.
        let outcome = if input.contains("@slp_crash_test") {
            if marker_present(SLP_FILE, SLP_BUG_MARKER) {
                OptOutcome::Abort(slp_crash_stderr(argv))
            } else {
                OptOutcome::Output(input.clone())
            }
        } else if input.contains("@fabs_case") {
            if marker_present(INSTSIMPLIFY_FILE, FABS_BUG_MARKER) {
                OptOutcome::Output(FABS_MISCOMPILED_IR.to_string())
            } else {
                OptOutcome::Output(input.clone())
            }
        } else if input.contains("@peel_crash_test") {
            if marker_present(LOOPPEEL_FILE, PEEL_BUG_MARKER) {
                OptOutcome::Abort(peel_crash_stderr(argv))
            } else {
                OptOutcome::Output(input.clone())
            }
        } else if input.contains("@regress_case") {
            if marker_present(GVN_FILE, GVN_BUG_MARKER) {
                OptOutcome::Segfault(gvn_crash_stderr(argv))
            } else {
                OptOutcome::Output(gvn_forwarded_output(&input))
            }
        } else {
            // @flaky_case and anything unrecognized run clean and unchanged.
            OptOutcome::Output(input.clone())
        };

        Ok(match outcome {
            OptOutcome::Abort(stderr) => Transcript::failed(134, "", stderr),
            OptOutcome::Segfault(stderr) => Transcript::failed(139, "", stderr),
            OptOutcome::Output(output) => {
                let stderr = if wants_print_changed(argv) {
                    print_changed_banners(argv, &input, &output)
                } else {
                    String::new()
                };
                Transcript {
                    stdout: output.into_bytes(),
                    stderr: stderr.into_bytes(),
                    exit_code: 0,
                    timed_out: false,
                }
            }
        })
    }

    fn validate(&self, stdin: &[u8]) -> Transcript {
        let text = String::from_utf8_lossy(stdin);
        let (source, target) = match text.split_once(VALIDATOR_INPUT_SEPARATOR) {
            Some(pair) => pair,
            None => {
                return Transcript::failed(
                    1,
                    "alive-tv: expected a source and a target module\n",
                    "",
                )
            }
        };
        // The only unsound demo transform drops a fabs; everything else is a
        // refinement.
        let dropped_fabs = source.contains("@llvm.fabs") && !target.contains("@llvm.fabs");
        if dropped_fabs {
            Transcript::ok(refutation_output(source, target), "")
        } else {
            Transcript::ok(
                "----------------------------------------\n\
                 Transformation seems to be correct!\n",
                "",
            )
        }
    }

    fn lit(&self, fingerprint: &str, argv: &[String]) -> Result<Transcript, ExecError> {
        let tree = self.tree_for(fingerprint).ok_or_else(|| ExecError::Spawn {
            tool: "lit".to_string(),
            reason: format!("no completed build for fingerprint {fingerprint}"),
        })?;

        let mut results: Vec<(String, bool)> = Vec::new();
        for token in argv {
            if let Some(component) = token.strip_prefix("component:") {
                component_results(&tree, component, &mut results).map_err(|reason| {
                    ExecError::Spawn {
                        tool: "lit".to_string(),
                        reason,
                    }
                })?;
            } else if token == "all-middle-end" {
                for (component, _) in COMPONENT_TEST_COUNTS {
                    component_results(&tree, component, &mut results)
                        .expect("built-in component");
                }
                let breaks_middle_end = tree
                    .values()
                    .any(|c| c.contains(BREAKS_MIDDLE_END_TESTS_MARKER));
                for i in 1..=MIDDLE_END_SMOKE_COUNT {
                    let fail = breaks_middle_end && i == MIDDLE_END_SMOKE_COUNT;
                    results.push((format!("Transforms/MiddleEnd/smoke-{i:02}.ll"), !fail));
                }
            } else if let Some(path) = token.strip_prefix("path:") {
                results.push((path.to_string(), true));
            } else {
                return Err(ExecError::Spawn {
                    tool: "lit".to_string(),
                    reason: format!("unrecognized test scope token {token:?}"),
                });
            }
        }
        Ok(render_lit_output(&results))
    }
}

impl Exec for SimulatedCompiler {
    fn exec(&self, req: &ExecRequest) -> Result<Transcript, ExecError> {
        match req.key.tool.as_str() {
            "build" => Ok(self.build(&req.key.fingerprint, req.stdin)),
            "opt" => self.opt(&req.key.fingerprint, &req.key.argv, req.stdin),
            "alive-tv" => Ok(self.validate(req.stdin)),
            "lit" => self.lit(&req.key.fingerprint, &req.key.argv),
            other => Err(ExecError::UnknownTool(other.to_string())),
        }
    }
}

enum OptOutcome {
    Output(String),
    Abort(String),
    Segfault(String),
}

fn wants_print_changed(argv: &[String]) -> bool {
    argv.iter()
        .any(|a| a == "-print-changed" || a == "--print-changed")
}

/// Pass pipeline named by `-passes=`; empty when absent.
fn pass_pipeline(argv: &[String]) -> Vec<String> {
    argv.iter()
        .find_map(|a| {
            a.strip_prefix("-passes=")
                .or_else(|| a.strip_prefix("--passes="))
        })
        .map(|p| p.split(',').map(|s| s.trim().to_string()).collect())
        .unwrap_or_default()
}

fn pass_display_name(pass: &str) -> String {
    match pass {
        "instsimplify" => "InstSimplifyPass".to_string(),
        "instcombine" => "InstCombinePass".to_string(),
        "slp-vectorizer" => "SLPVectorizerPass".to_string(),
        "loop-unroll" => "LoopUnrollPass".to_string(),
        "gvn" => "GVNPass".to_string(),
        other => {
            // kebab-case to CamelCase plus the conventional suffix
            let camel: String = other
                .split('-')
                .map(|seg| {
                    let mut cs = seg.chars();
                    match cs.next() {
                        Some(first) => first.to_uppercase().chain(cs).collect::<String>(),
                        None => String::new(),
                    }
                })
                .collect();
            format!("{camel}Pass")
        }
    }
}

fn entry_function_name(ir: &str) -> String {
    ir.find("define ")
        .and_then(|at| {
            let rest = &ir[at..];
            let sigil = rest.find('@')?;
            let name: String = rest[sigil + 1..]
                .chars()
                .take_while(|c| c.is_ascii_alphanumeric() || *c == '_' || *c == '.')
                .collect();
            Some(name)
        })
        .unwrap_or_else(|| "unknown".to_string())
}

fn print_changed_banners(argv: &[String], input: &str, output: &str) -> String {
    let func = entry_function_name(input);
    let mut out = format!("*** IR Dump At Start ***\n{input}");
    for pass in pass_pipeline(argv) {
        let name = pass_display_name(&pass);
        if output == input {
            out.push_str(&format!(
                "*** IR Dump After {name} on {func} omitted because no change ***\n"
            ));
        } else {
            out.push_str(&format!("*** IR Dump After {name} on {func} ***\n{output}"));
        }
    }
    out
}

/// What GVN legitimately does to the regression reproducer once fixed:
/// forward the stored value to the second load.
fn gvn_forwarded_output(input: &str) -> String {
    input
        .replace("  %w = load i32, ptr %p, align 4\n  ret i32 %w\n", "  ret i32 %v\n")
}

fn stack_frames(frames: &[(&str, Option<&str>)]) -> String {
    let mut out = String::new();
    for (i, (symbol, location)) in frames.iter().enumerate() {
        let addr = 0x0000_5634_1200_0000u64 + (i as u64) * 0x1c2;
        match location {
            Some(loc) => out.push_str(&format!(" #{i} 0x{addr:016x} {symbol} {loc}\n")),
            None => out.push_str(&format!(" #{i} 0x{addr:016x} {symbol}\n")),
        }
    }
    out
}

const SIGNAL_PREAMBLE: &[(&str, Option<&str>)] = &[
    ("llvm::sys::PrintStackTrace(llvm::raw_ostream&, int)", None),
    ("llvm::sys::RunSignalHandlers()", None),
    ("SignalHandler(int)", None),
    ("__restore_rt", None),
];

const ABORT_FRAMES: &[(&str, Option<&str>)] = &[
    ("raise", None),
    ("abort", None),
    ("__assert_fail", None),
];

fn crash_stderr(
    headline: &str,
    args_line: &str,
    preamble_abort: bool,
    culprits: &[(&str, Option<&str>)],
    tail_note: &str,
) -> String {
    let mut frames: Vec<(&str, Option<&str>)> = Vec::new();
    frames.extend_from_slice(SIGNAL_PREAMBLE);
    if preamble_abort {
        frames.extend_from_slice(ABORT_FRAMES);
    }
    frames.extend_from_slice(culprits);
    frames.extend_from_slice(&[
        (
            "llvm::detail::PassModel<llvm::Function, llvm::PassInfoMixin<void>>::run(llvm::Function&, llvm::AnalysisManager<llvm::Function>&)",
            None,
        ),
        (
            "llvm::PassManager<llvm::Function>::run(llvm::Function&, llvm::AnalysisManager<llvm::Function>&)",
            None,
        ),
        ("llvm::ModuleToFunctionPassAdaptor::run(llvm::Module&, llvm::AnalysisManager<llvm::Module>&)", None),
        ("main", None),
        ("__libc_start_main", None),
    ]);

    format!(
        "{headline}\n\
         PLEASE submit a bug report and include the crash backtrace.\n\
         Stack dump:\n\
         0.\tProgram arguments: {args_line}\n\
         {}{tail_note}",
        stack_frames(&frames)
    )
}

fn slp_crash_stderr(argv: &[String]) -> String {
    crash_stderr(
        "opt: llvm/lib/Transforms/Vectorize/SLPVectorizer.cpp:21: InstructionCost \
         llvm::slpvectorizer::BoUpSLP::getEntryCost(const TreeEntry *, ArrayRef<Value *>): \
         Assertion `ValTy->isIntOrIntVectorTy() && \"invalid intrinsic cost type\"' failed.",
        &format!("opt {}", argv.join(" ")),
        true,
        &[
            (
                "llvm::slpvectorizer::BoUpSLP::getEntryCost(llvm::slpvectorizer::BoUpSLP::TreeEntry const*, llvm::ArrayRef<llvm::Value*>)",
                Some("llvm/lib/Transforms/Vectorize/SLPVectorizer.cpp:21:30"),
            ),
            (
                "llvm::slpvectorizer::BoUpSLP::getTreeCost(llvm::ArrayRef<llvm::Value*>)",
                Some("llvm/lib/Transforms/Vectorize/SLPVectorizer.cpp:33:13"),
            ),
            ("llvm::SLPVectorizerPass::runImpl(llvm::Function&)", None),
            (
                "llvm::SLPVectorizerPass::run(llvm::Function&, llvm::FunctionAnalysisManager&)",
                None,
            ),
        ],
        "Aborted (core dumped)\n",
    )
}

fn peel_crash_stderr(argv: &[String]) -> String {
    crash_stderr(
        "opt: llvm/lib/Transforms/Utils/LoopPeel.cpp:16: unsigned \
         llvm::computePeelCount(Loop &, unsigned, const TargetTransformInfo &): \
         Assertion `DesiredPeelCount <= MaxPeelCount && \"peel count exceeds budget\"' failed.",
        &format!("opt {}", argv.join(" ")),
        true,
        &[
            (
                "llvm::computePeelCount(llvm::Loop&, unsigned int, llvm::TargetTransformInfo const&)",
                Some("llvm/lib/Transforms/Utils/LoopPeel.cpp:16:3"),
            ),
            ("llvm::peelLoop(llvm::Loop*, unsigned int)", None),
            ("llvm::tryToUnrollLoop(llvm::Loop&, llvm::DominatorTree&)", None),
            (
                "llvm::LoopUnrollPass::run(llvm::Function&, llvm::FunctionAnalysisManager&)",
                None,
            ),
        ],
        "Aborted (core dumped)\n",
    )
}

fn gvn_crash_stderr(argv: &[String]) -> String {
    crash_stderr(
        "opt: segmentation fault while running pass \"gvn\"",
        &format!("opt {}", argv.join(" ")),
        false,
        &[
            (
                "llvm::GVNPass::processLoad(llvm::LoadInst*)",
                Some("llvm/lib/Transforms/Scalar/GVN.cpp:11:10"),
            ),
            (
                "llvm::GVNPass::runOnFunction(llvm::Function&)",
                Some("llvm/lib/Transforms/Scalar/GVN.cpp:19:20"),
            ),
        ],
        "Segmentation fault (core dumped)\n",
    )
}

/// Refutation in the translation validator's output format: echoed modules,
/// the verdict, and a minimal counterexample.
fn refutation_output(source: &str, target: &str) -> String {
    format!(
        "----------------------------------------\n\
         {source}\n\
         =>\n\
         {target}\n\
         Transformation doesn't verify!\n\n\
         ERROR: Value mismatch\n\n\
         Example:\n\
         half noundef %x = #x8001 (SNaN)\n\n\
         Source value: #x0001 (0.000000059604644775?)\n\
         Target value: #x8001 (SNaN)\n"
    )
}

fn component_results(
    tree: &Tree,
    component: &str,
    results: &mut Vec<(String, bool)>,
) -> Result<(), String> {
    let count = COMPONENT_TEST_COUNTS
        .iter()
        .find(|(name, _)| *name == component)
        .map(|(_, n)| *n)
        .ok_or_else(|| format!("unknown test component {component:?}"))?;
    let file = COMPONENT_FILES
        .iter()
        .find(|(name, _)| *name == component)
        .map(|(_, f)| *f)
        .expect("component table is aligned with test counts");
    let broken = tree
        .get(file)
        .map(|c| c.contains(BREAKS_COMPONENT_TESTS_MARKER))
        .unwrap_or(false);
    for i in 1..count {
        results.push((format!("Transforms/{component}/test-{i:02}.ll"), true));
    }
    // the guard test is the one a breaking change trips
    results.push((format!("Transforms/{component}/regression-guard.ll"), !broken));
    Ok(())
}

fn render_lit_output(results: &[(String, bool)]) -> Transcript {
    let total = results.len();
    let mut out = format!("-- Testing: {total} tests, 1 workers --\n");
    let mut failures = Vec::new();
    for (i, (name, pass)) in results.iter().enumerate() {
        let verdict = if *pass { "PASS" } else { "FAIL" };
        out.push_str(&format!("{verdict}: LLVM :: {name} ({} of {total})\n", i + 1));
        if !*pass {
            failures.push(name.clone());
        }
    }
    if !failures.is_empty() {
        out.push_str("********************\n");
        out.push_str(&format!("Failed Tests ({}):\n", failures.len()));
        for name in &failures {
            out.push_str(&format!("  LLVM :: {name}\n"));
        }
    }
    out.push_str(&format!(
        "\nTesting Time: 0.12s\n\nTotal Discovered Tests: {total}\n  Passed: {}\n",
        total - failures.len()
    ));
    if !failures.is_empty() {
        out.push_str(&format!("  Failed: {}\n", failures.len()));
    }
    if failures.is_empty() {
        Transcript::ok(out, "")
    } else {
        Transcript::failed(1, out, "")
    }
}
