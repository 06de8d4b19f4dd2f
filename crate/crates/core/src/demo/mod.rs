//! A self-contained miniature optimizer world used by tests, examples, and
//! offline demos.
//!
//! The world holds a handful of tiny source trees (commits), each seeded with
//! known optimizer bugs, plus an issue feed describing them. A
//! [`SimulatedCompiler`] implements the toolchain's `Exec` interface over
//! these trees: builds apply patches to in-memory sources, the optimizer
//! crashes or miscompiles exactly while the corresponding buggy code is
//! present, the translation validator refutes dropped `fabs` calls, and the
//! regression-test runner fails when a patch carries a test-breaking marker.
//!
//! Everything downstream (benchmark construction, agent sessions, evaluation)
//! can therefore run hermetically and deterministically.

mod sim;

pub use sim::SimulatedCompiler;

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};

use crate::bench_builder::{FeedCandidate, FixInfo};
use crate::diffscope::{
    diff_file_contents, render_unified_diff, scan_source, FunctionIndex, UnifiedDiff,
};
use crate::toolchain::{
    DebugScript, ScriptedDebuggerFactory, Toolchain, ToolchainConfig,
};

// Commit ids of the demo world. The `*_BASE` commits have source snapshots
// and build; `PEEL_PARENT` has a snapshot but does not build;
// `FABS_MISSING_PARENT` has no snapshot at all.
pub const SLP_BASE: &str = "9a8b0407fc16af4ca6f79a2583297318a645d88a";
pub const SLP_FIX: &str = "3cb82f49dc990dc20a765856c0e126193992fe44";
pub const FABS_MISSING_PARENT: &str = "0000aaaa1111bbbb2222cccc3333dddd4444eeee";
pub const FABS_BASE: &str = "4f1a2b3c4d5e6f708192a3b4c5d6e7f8091a2b3c";
pub const FABS_FIX: &str = "5a0b1c2d3e4f5a6b7c8d9e0f1a2b3c4d5e6f7a8b";
pub const PEEL_PARENT: &str = "0123456789abcdef0123456789abcdef01234567";
pub const PEEL_BASE: &str = "77cc88dd99ee00ff11aa22bb33cc44dd55ee66ff";
pub const PEEL_FIX: &str = "fedcba9876543210fedcba9876543210fedcba98";
pub const RETRACTED_BASE: &str = "2222aaaa3333bbbb4444cccc5555dddd6666eeee";
pub const RETRACTED_FIX: &str = "7777ffff8888000099991111aaaa2222bbbb3333";
pub const FLAKY_BASE: &str = "1111222233334444555566667777888899990000";
pub const FLAKY_FIX: &str = "aaaabbbbccccddddeeeeffff0000111122223333";
pub const REGRESS_BASE: &str = "abcdef0123456789abcdef0123456789abcdef01";
pub const REGRESS_FIX: &str = "10fedcba9876543210fedcba9876543210fedcba";

// Source paths.
pub const SLP_FILE: &str = "llvm/lib/Transforms/Vectorize/SLPVectorizer.cpp";
pub const INSTSIMPLIFY_FILE: &str = "llvm/lib/Analysis/InstructionSimplify.cpp";
pub const LOOPPEEL_FILE: &str = "llvm/lib/Transforms/Utils/LoopPeel.cpp";
pub const INSTCOMBINE_FILE: &str =
    "llvm/lib/Transforms/InstCombine/InstCombineCalls.cpp";
pub const GVN_FILE: &str = "llvm/lib/Transforms/Scalar/GVN.cpp";
pub const VALUETRACKING_FILE: &str = "llvm/lib/Analysis/ValueTracking.cpp";
pub const CMAKELISTS_FILE: &str = "llvm/lib/CMakeLists.txt";

// Markers the simulator keys behavior on. Each buggy source contains its
// marker; the corresponding fix removes it.
pub const SLP_BUG_MARKER: &str = "CostAttrs(MinMaxID, VecTy";
pub const FABS_BUG_MARKER: &str = "!SignBitMustBeSet(Op0, Q)";
pub const PEEL_BUG_MARKER: &str = "// TODO: clamp peel count";
pub const GVN_BUG_MARKER: &str = "// demo: unchecked dominating value";
/// A file containing this marker makes its component's regression tests fail.
pub const BREAKS_COMPONENT_TESTS_MARKER: &str = "// demo: breaks component tests";
/// A file containing this marker makes the broad middle-end suite fail.
pub const BREAKS_MIDDLE_END_TESTS_MARKER: &str = "// demo: breaks middle-end tests";

/// Component name to the source file that owns it in the demo world.
pub const COMPONENT_FILES: &[(&str, &str)] = &[
    ("SLPVectorizer", SLP_FILE),
    ("InstSimplify", INSTSIMPLIFY_FILE),
    ("LoopUnroll", LOOPPEEL_FILE),
    ("InstCombine", INSTCOMBINE_FILE),
    ("GVN", GVN_FILE),
    ("ValueTracking", VALUETRACKING_FILE),
];

/// Issue ids, one per feed entry.
pub const SLP_ISSUE_ID: u64 = 99899;
pub const FABS_ISSUE_ID: u64 = 101333;
pub const PEEL_ISSUE_ID: u64 = 102500;
pub const RETRACTED_ISSUE_ID: u64 = 103001;
pub const FLAKY_ISSUE_ID: u64 = 103777;
pub const REGRESS_ISSUE_ID: u64 = 104242;
pub const DUPLICATE_ISSUE_ID: u64 = 104500;

const SLP_BUGGY: &str = r#"//===- SLPVectorizer.cpp - Bottom-up SLP vectorizer -----------------------===//
//
// Cost modeling and vectorization of straight-line scalar code.
//
//===----------------------------------------------------------------------===//

#include "llvm/Transforms/Vectorize/SLPVectorizer.h"

namespace llvm {
namespace slpvectorizer {

InstructionCost BoUpSLP::getEntryCost(const TreeEntry *E,
                                      ArrayRef<Value *> VectorizedVals) {
  Type *ScalarTy = E->Scalars[0]->getType();
  auto *VecTy = getWidenedType(ScalarTy, E->Scalars.size());
  Intrinsic::ID MinMaxID = getMinMaxReductionIntrinsicOp(RdxKind);
  if (MinMaxID != Intrinsic::not_intrinsic) {
    auto *CanonicalType = VecTy->getWithNewType(IntegerType::get(
        VecTy->getContext(), DL->getTypeSizeInBits(VecTy->getScalarType())));

    IntrinsicCostAttributes CostAttrs(MinMaxID, VecTy, {VecTy, VecTy});
    InstructionCost IntrinsicCost =
        TTI->getIntrinsicInstrCost(CostAttrs, CostKind);
    // If the minmax reduction is only used by the select, fold the cost of
    // the select into the reduction cost.
    return IntrinsicCost;
  }
  return getShuffleCost(E, VecTy);
}

InstructionCost BoUpSLP::getTreeCost(ArrayRef<Value *> VectorizedVals) {
  InstructionCost Cost = 0;
  for (const std::unique_ptr<TreeEntry> &E : VectorizableTree)
    Cost += getEntryCost(E.get(), VectorizedVals);
  return Cost;
}

} // namespace slpvectorizer
} // namespace llvm
"#;

const SLP_FIXED: &str = r#"//===- SLPVectorizer.cpp - Bottom-up SLP vectorizer -----------------------===//
//
// Cost modeling and vectorization of straight-line scalar code.
//
//===----------------------------------------------------------------------===//

#include "llvm/Transforms/Vectorize/SLPVectorizer.h"

namespace llvm {
namespace slpvectorizer {

InstructionCost BoUpSLP::getEntryCost(const TreeEntry *E,
                                      ArrayRef<Value *> VectorizedVals) {
  Type *ScalarTy = E->Scalars[0]->getType();
  auto *VecTy = getWidenedType(ScalarTy, E->Scalars.size());
  Intrinsic::ID MinMaxID = getMinMaxReductionIntrinsicOp(RdxKind);
  if (MinMaxID != Intrinsic::not_intrinsic) {
    auto *CanonicalType = VecTy->getWithNewType(IntegerType::get(
        VecTy->getContext(), DL->getTypeSizeInBits(VecTy->getScalarType())));

    IntrinsicCostAttributes CostAttrs(MinMaxID, CanonicalType,
                                      {CanonicalType, CanonicalType});
    InstructionCost IntrinsicCost =
        TTI->getIntrinsicInstrCost(CostAttrs, CostKind);
    // If the minmax reduction is only used by the select, fold the cost of
    // the select into the reduction cost.
    return IntrinsicCost;
  }
  return getShuffleCost(E, VecTy);
}

InstructionCost BoUpSLP::getTreeCost(ArrayRef<Value *> VectorizedVals) {
  InstructionCost Cost = 0;
  for (const std::unique_ptr<TreeEntry> &E : VectorizableTree)
    Cost += getEntryCost(E.get(), VectorizedVals);
  return Cost;
}

} // namespace slpvectorizer
} // namespace llvm
"#;

const INSTSIMPLIFY_BUGGY: &str = r#"//===- InstructionSimplify.cpp - Fold instructions to simpler forms -------===//
//
// Routines that fold instructions into equivalent, cheaper forms without
// creating new instructions.
//
//===----------------------------------------------------------------------===//

#include "llvm/Analysis/InstructionSimplify.h"

namespace llvm {

static Value *simplifyUnaryIntrinsic(Function *F, Value *Op0,
                                     const SimplifyQuery &Q) {
  Intrinsic::ID IID = F->getIntrinsicID();
  switch (IID) {
  case Intrinsic::fabs:
    // fabs(x) -> x if the sign bit is never set.
    if (!SignBitMustBeSet(Op0, Q))
      return Op0;
    break;
  case Intrinsic::bswap:
    // bswap(bswap(x)) -> x
    if (Value *X = foldDoubleApplication(IID, Op0))
      return X;
    break;
  default:
    break;
  }
  return nullptr;
}

Value *simplifyCall(CallBase *Call, const SimplifyQuery &Q) {
  Function *F = Call->getCalledFunction();
  if (F && F->isIntrinsic() && Call->arg_size() == 1)
    return simplifyUnaryIntrinsic(F, Call->getArgOperand(0), Q);
  return nullptr;
}

} // namespace llvm
"#;

const INSTSIMPLIFY_FIXED: &str = r#"//===- InstructionSimplify.cpp - Fold instructions to simpler forms -------===//
//
// Routines that fold instructions into equivalent, cheaper forms without
// creating new instructions.
//
//===----------------------------------------------------------------------===//

#include "llvm/Analysis/InstructionSimplify.h"

namespace llvm {

static Value *simplifyUnaryIntrinsic(Function *F, Value *Op0,
                                     const SimplifyQuery &Q) {
  Intrinsic::ID IID = F->getIntrinsicID();
  switch (IID) {
  case Intrinsic::fabs: {
    // fabs(x) -> x only when x is known never negative; a plain sign-bit
    // check mishandles negative zero and negative NaN payloads.
    KnownFPClass Known = computeKnownFPClass(Op0, Q, fcNegative);
    if (Known.isKnownNever(fcNegative))
      return Op0;
    break;
  }
  case Intrinsic::bswap:
    // bswap(bswap(x)) -> x
    if (Value *X = foldDoubleApplication(IID, Op0))
      return X;
    break;
  default:
    break;
  }
  return nullptr;
}

Value *simplifyCall(CallBase *Call, const SimplifyQuery &Q) {
  Function *F = Call->getCalledFunction();
  if (F && F->isIntrinsic() && Call->arg_size() == 1)
    return simplifyUnaryIntrinsic(F, Call->getArgOperand(0), Q);
  return nullptr;
}

} // namespace llvm
"#;

const LOOPPEEL_BUGGY: &str = r#"//===- LoopPeel.cpp - Loop peeling utilities ------------------------------===//

#include "llvm/Transforms/Utils/LoopPeel.h"

namespace llvm {

bool canPeelLoop(const Loop &L) {
  return L.isLoopSimplifyForm() && !L.getHeader()->getParent()->hasOptSize();
}

unsigned computePeelCount(Loop &L, unsigned MaxPeelCount,
                          const TargetTransformInfo &TTI) {
  unsigned DesiredPeelCount = TTI.getPeelingPreferences(L).PeelCount;
  // Peel enough iterations to resolve the exit condition.
  // TODO: clamp peel count
  return DesiredPeelCount;
}

} // namespace llvm
"#;

const LOOPPEEL_FIXED: &str = r#"//===- LoopPeel.cpp - Loop peeling utilities ------------------------------===//

#include "llvm/Transforms/Utils/LoopPeel.h"

namespace llvm {

bool canPeelLoop(const Loop &L) {
  return L.isLoopSimplifyForm() && !L.getHeader()->getParent()->hasOptSize();
}

unsigned computePeelCount(Loop &L, unsigned MaxPeelCount,
                          const TargetTransformInfo &TTI) {
  unsigned DesiredPeelCount = TTI.getPeelingPreferences(L).PeelCount;
  // Peel enough iterations to resolve the exit condition, but never beyond
  // the unroller's budget: downstream cloning asserts on oversized counts.
  if (DesiredPeelCount > MaxPeelCount)
    DesiredPeelCount = MaxPeelCount;
  return DesiredPeelCount;
}

} // namespace llvm
"#;

const GVN_BUGGY: &str = r#"//===- GVN.cpp - Global value numbering -----------------------------------===//

#include "llvm/Transforms/Scalar/GVN.h"

namespace llvm {

bool GVNPass::processLoad(LoadInst *L) {
  Value *Address = L->getPointerOperand();
  // demo: unchecked dominating value
  Value *Available = findDominatingValue(Address, L);
  return replaceUses(L, Available);
}

bool GVNPass::runOnFunction(Function &F) {
  bool Changed = false;
  for (Instruction &I : instructions(F))
    if (auto *Load = dyn_cast<LoadInst>(&I))
      Changed |= processLoad(Load);
  return Changed;
}

} // namespace llvm
"#;

// The upstream fix for the GVN bug adds the missing null check but also
// carries a marker that breaks its component's regression tests, so the
// pipeline's final validation stage rejects the issue.
const GVN_FIXED_BUT_REGRESSING: &str = r#"//===- GVN.cpp - Global value numbering -----------------------------------===//

#include "llvm/Transforms/Scalar/GVN.h"

namespace llvm {

bool GVNPass::processLoad(LoadInst *L) {
  Value *Address = L->getPointerOperand();
  // demo: breaks component tests
  Value *Available = findDominatingValue(Address, L);
  if (!Available)
    return false;
  return replaceUses(L, Available);
}

bool GVNPass::runOnFunction(Function &F) {
  bool Changed = false;
  for (Instruction &I : instructions(F))
    if (auto *Load = dyn_cast<LoadInst>(&I))
      Changed |= processLoad(Load);
  return Changed;
}

} // namespace llvm
"#;

const INSTCOMBINE_NEUTRAL: &str = r#"//===- InstCombineCalls.cpp - Combine call-site patterns ------------------===//

#include "llvm/Transforms/InstCombine/InstCombine.h"

namespace llvm {

Value *InstCombinerImpl::foldIntrinsicCall(IntrinsicInst *II) {
  // Reassociation and double-application folds live here.
  if (II->arg_size() != 1)
    return nullptr;
  return foldUnaryIntrinsic(II);
}

} // namespace llvm
"#;

const INSTCOMBINE_TWEAKED: &str = r#"//===- InstCombineCalls.cpp - Combine call-site patterns ------------------===//

#include "llvm/Transforms/InstCombine/InstCombine.h"

namespace llvm {

Value *InstCombinerImpl::foldIntrinsicCall(IntrinsicInst *II) {
  // Reassociation, double-application, and sign folds live here.
  if (II->arg_size() != 1)
    return nullptr;
  return foldUnaryIntrinsic(II);
}

} // namespace llvm
"#;

const VALUETRACKING_NEUTRAL: &str = r#"//===- ValueTracking.cpp - Compute properties of values -------------------===//

#include "llvm/Analysis/ValueTracking.h"

namespace llvm {

bool isKnownNonNegative(const Value *V, const SimplifyQuery &Q) {
  KnownBits Known = computeKnownBits(V, Q);
  return Known.isNonNegative();
}

} // namespace llvm
"#;

const VALUETRACKING_TWEAKED: &str = r#"//===- ValueTracking.cpp - Compute properties of values -------------------===//

#include "llvm/Analysis/ValueTracking.h"

namespace llvm {

bool isKnownNonNegative(const Value *V, const SimplifyQuery &Q) {
  // Non-negativity follows directly from the computed known bits.
  KnownBits Known = computeKnownBits(V, Q);
  return Known.isNonNegative();
}

} // namespace llvm
"#;

const SLP_HEADER: &str = r#"//===- SLPVectorizer.h ----------------------------------------------------===//
#ifndef LLVM_TRANSFORMS_VECTORIZE_SLPVECTORIZER_H
#define LLVM_TRANSFORMS_VECTORIZE_SLPVECTORIZER_H

namespace llvm {
namespace slpvectorizer {
class BoUpSLP;
} // namespace slpvectorizer
} // namespace llvm

#endif
"#;

const INSTSIMPLIFY_HEADER: &str = r#"//===- InstructionSimplify.h ----------------------------------------------===//
#ifndef LLVM_ANALYSIS_INSTRUCTIONSIMPLIFY_H
#define LLVM_ANALYSIS_INSTRUCTIONSIMPLIFY_H

namespace llvm {
class Value;
struct SimplifyQuery;
} // namespace llvm

#endif
"#;

const CMAKELISTS: &str = "add_subdirectory(Analysis)\nadd_subdirectory(Transforms)\n";

const BROKEN_SUPPORT_FILE: &str = "llvm/lib/Support/Broken.cpp";
const BROKEN_SUPPORT: &str = r#"//===- Broken.cpp - In-flight refactoring, does not build -----------------===//
#error work in progress
"#;

/// IR reproducers. Each names its entry function after its scenario; the
/// simulated optimizer keys on those names.
pub const SLP_REPRO_IR: &str = r#"define i16 @slp_crash_test(ptr %p) {
entry:
  %a = load i16, ptr %p, align 2
  %q = getelementptr inbounds i16, ptr %p, i64 1
  %b = load i16, ptr %q, align 2
  %m1 = tail call i16 @llvm.smax.i16(i16 %a, i16 %b)
  %r = getelementptr inbounds i16, ptr %p, i64 2
  %c = load i16, ptr %r, align 2
  %m2 = tail call i16 @llvm.smax.i16(i16 %m1, i16 %c)
  ret i16 %m2
}

declare i16 @llvm.smax.i16(i16, i16)
"#;

pub const SLP_RUN_LINE: &str =
    "; opt -passes=slp-vectorizer -mtriple=systemz-unknown -mcpu=z15 -S < %s";

pub const FABS_REPRO_IR: &str = r#"define half @fabs_case(half noundef %x) {
entry:
  %sub = fsub half 0xH8000, %x
  %fabs = call half @llvm.fabs.f16(half %sub)
  ret half %fabs
}

declare half @llvm.fabs.f16(half)
"#;

pub const FABS_RUN_LINE: &str = "; opt -passes=instsimplify -S < %s";

/// What the buggy simplifier emits for [`FABS_REPRO_IR`]: the `fabs` call is
/// dropped, which is wrong for negative inputs.
pub const FABS_MISCOMPILED_IR: &str = r#"define half @fabs_case(half noundef %x) {
entry:
  %sub = fsub half 0xH8000, %x
  ret half %sub
}
"#;

pub const PEEL_REPRO_IR: &str = r#"define void @peel_crash_test(i64 %n) {
entry:
  br label %loop

loop:
  %iv = phi i64 [ 0, %entry ], [ %iv.next, %loop ]
  %iv.next = add nuw i64 %iv, 1
  %cmp = icmp ult i64 %iv.next, %n
  br i1 %cmp, label %loop, label %exit

exit:
  ret void
}
"#;

pub const PEEL_RUN_LINE: &str = "; opt -passes=loop-unroll -unroll-allow-peeling -S < %s";

pub const FLAKY_REPRO_IR: &str = r#"define i32 @flaky_case(i32 %x) {
entry:
  %y = add i32 %x, 1
  %z = sub i32 %y, 1
  ret i32 %z
}
"#;

pub const FLAKY_RUN_LINE: &str = "; opt -passes=instcombine -S < %s";

pub const REGRESS_REPRO_IR: &str = r#"define i32 @regress_case(ptr %p) {
entry:
  %v = load i32, ptr %p, align 4
  store i32 %v, ptr %p, align 4
  %w = load i32, ptr %p, align 4
  ret i32 %w
}
"#;

pub const REGRESS_RUN_LINE: &str = "; opt -passes=gvn -S < %s";

/// The six scenarios in the demo feed (the seventh feed entry is a duplicate
/// report of [`DemoIssue::SlpCrash`]).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DemoIssue {
    /// Crash in the vectorizer's cost model; survives the whole pipeline.
    SlpCrash,
    /// Miscompilation in instruction simplification; survives the whole
    /// pipeline. Its direct parent has no snapshot, so the buildable base is
    /// found one step further back.
    FabsMiscompile,
    /// Crash in loop peeling; the direct parent commit does not build, so
    /// the base falls back to the grandparent.
    PeelCrash,
    /// Carries an excluded label; screened out before any tool runs.
    Retracted,
    /// Reported crash that does not reproduce on a clean build.
    Flaky,
    /// Real bug whose upstream fix breaks the component's regression tests.
    Regressing,
}

impl DemoIssue {
    pub fn id(self) -> u64 {
        match self {
            DemoIssue::SlpCrash => SLP_ISSUE_ID,
            DemoIssue::FabsMiscompile => FABS_ISSUE_ID,
            DemoIssue::PeelCrash => PEEL_ISSUE_ID,
            DemoIssue::Retracted => RETRACTED_ISSUE_ID,
            DemoIssue::Flaky => FLAKY_ISSUE_ID,
            DemoIssue::Regressing => REGRESS_ISSUE_ID,
        }
    }
}

/// Filesystem layout produced by [`DemoWorld::materialize`].
#[derive(Debug, Clone)]
pub struct DemoPaths {
    pub snapshot_root: PathBuf,
    pub feed_path: PathBuf,
    pub doc_root: PathBuf,
}

/// The in-memory demo world: source trees per commit plus the issue feed.
#[derive(Debug, Clone)]
pub struct DemoWorld {
    trees: BTreeMap<String, BTreeMap<String, String>>,
}

impl Default for DemoWorld {
    fn default() -> Self {
        Self::new()
    }
}

impl DemoWorld {
    pub fn new() -> Self {
        let mut trees = BTreeMap::new();

        let neutral = |slp: &str, insts: &str, peel: &str| {
            let mut t = BTreeMap::new();
            t.insert(CMAKELISTS_FILE.to_string(), CMAKELISTS.to_string());
            t.insert(
                "llvm/include/llvm/Transforms/Vectorize/SLPVectorizer.h".to_string(),
                SLP_HEADER.to_string(),
            );
            t.insert(
                "llvm/include/llvm/Analysis/InstructionSimplify.h".to_string(),
                INSTSIMPLIFY_HEADER.to_string(),
            );
            t.insert(SLP_FILE.to_string(), slp.to_string());
            t.insert(INSTSIMPLIFY_FILE.to_string(), insts.to_string());
            t.insert(LOOPPEEL_FILE.to_string(), peel.to_string());
            t.insert(INSTCOMBINE_FILE.to_string(), INSTCOMBINE_NEUTRAL.to_string());
            t.insert(GVN_FILE.to_string(), GVN_BUGGY.to_string());
            t.insert(VALUETRACKING_FILE.to_string(), VALUETRACKING_NEUTRAL.to_string());
            t
        };

        // Each base carries exactly its own bug; every other lever sits in
        // the benign position. The GVN bug is latent in every base (it only
        // fires on @regress_case input), which keeps the world small.
        trees.insert(
            SLP_BASE.to_string(),
            neutral(SLP_BUGGY, INSTSIMPLIFY_FIXED, LOOPPEEL_FIXED),
        );
        trees.insert(
            FABS_BASE.to_string(),
            neutral(SLP_FIXED, INSTSIMPLIFY_BUGGY, LOOPPEEL_FIXED),
        );

        let peel_base = neutral(SLP_FIXED, INSTSIMPLIFY_FIXED, LOOPPEEL_BUGGY);
        let mut peel_parent = peel_base.clone();
        peel_parent.insert(BROKEN_SUPPORT_FILE.to_string(), BROKEN_SUPPORT.to_string());
        trees.insert(PEEL_PARENT.to_string(), peel_parent);
        trees.insert(PEEL_BASE.to_string(), peel_base);

        let plain = || neutral(SLP_FIXED, INSTSIMPLIFY_FIXED, LOOPPEEL_FIXED);
        trees.insert(RETRACTED_BASE.to_string(), plain());
        trees.insert(FLAKY_BASE.to_string(), plain());
        trees.insert(REGRESS_BASE.to_string(), plain());

        DemoWorld { trees }
    }

    /// Source tree of a commit.
    pub fn tree(&self, commit: &str) -> Option<&BTreeMap<String, String>> {
        self.trees.get(commit)
    }

    pub fn trees(&self) -> &BTreeMap<String, BTreeMap<String, String>> {
        &self.trees
    }

    /// Function index over one commit's sources.
    pub fn index(&self, commit: &str) -> FunctionIndex {
        let mut index = FunctionIndex::empty();
        if let Some(tree) = self.trees.get(commit) {
            for (path, content) in tree {
                if path.ends_with(".cpp") || path.ends_with(".h") {
                    index.insert_file(path.clone(), scan_source(content));
                }
            }
        }
        index
    }

    fn single_file_diff(&self, commit: &str, path: &str, new_content: &str) -> String {
        let tree = self.trees.get(commit).expect("known demo commit");
        let old = tree.get(path).expect("file present in demo tree");
        let index = self.index(commit);
        let fp = diff_file_contents(path, path, old, new_content, Some(&index))
            .expect("old and new demo contents differ");
        render_unified_diff(&UnifiedDiff { files: vec![fp] })
    }

    /// The upstream fix of a scenario, as a unified diff against its base
    /// commit. Generated from the in-memory sources, so applying it to the
    /// base tree reproduces the fixed tree exactly.
    pub fn golden_diff(&self, issue: DemoIssue) -> String {
        match issue {
            DemoIssue::SlpCrash => self.single_file_diff(SLP_BASE, SLP_FILE, SLP_FIXED),
            DemoIssue::FabsMiscompile => {
                self.single_file_diff(FABS_BASE, INSTSIMPLIFY_FILE, INSTSIMPLIFY_FIXED)
            }
            DemoIssue::PeelCrash => {
                self.single_file_diff(PEEL_BASE, LOOPPEEL_FILE, LOOPPEEL_FIXED)
            }
            DemoIssue::Retracted => self.single_file_diff(
                RETRACTED_BASE,
                VALUETRACKING_FILE,
                VALUETRACKING_TWEAKED,
            ),
            DemoIssue::Flaky => {
                self.single_file_diff(FLAKY_BASE, INSTCOMBINE_FILE, INSTCOMBINE_TWEAKED)
            }
            DemoIssue::Regressing => {
                self.single_file_diff(REGRESS_BASE, GVN_FILE, GVN_FIXED_BUT_REGRESSING)
            }
        }
    }

    /// The issue feed, in collection order. Seven entries: the six scenarios
    /// plus a later duplicate report of the vectorizer crash.
    pub fn feed(&self) -> Vec<FeedCandidate> {
        fn ts(s: &str) -> DateTime<Utc> {
            s.parse().expect("valid demo timestamp")
        }
        fn body(prose: &str, run_line: &str, ir: &str) -> String {
            format!("{prose}\n\n```llvm\n{run_line}\n{ir}```\n")
        }

        vec![
            FeedCandidate {
                id: SLP_ISSUE_ID,
                title: "[SLP] Crash computing min/max reduction cost on SystemZ"
                    .to_string(),
                body: body(
                    "opt asserts while costing a small smax reduction. \
                     Bisects to the vectorizer's cost model.",
                    SLP_RUN_LINE,
                    SLP_REPRO_IR,
                ),
                labels: vec![
                    "llvm:SLPVectorizer".to_string(),
                    "crash-on-valid".to_string(),
                ],
                author: "JonPsson1".to_string(),
                timestamp: ts("2024-07-22T17:02:03Z"),
                fix: FixInfo {
                    sha: SLP_FIX.to_string(),
                    author_line: "Alexey Bataev <a.bataev@outlook.com>".to_string(),
                    date: ts("2024-07-22T19:45:28Z"),
                    message: "[SLP]Fix a crash when costing min/max reductions\n\n\
                              Use the canonical integer type for the intrinsic cost\n\
                              query instead of the raw vector type.\n\n\
                              Fixes #99899."
                        .to_string(),
                    patch: self.golden_diff(DemoIssue::SlpCrash),
                },
                ancestry: vec![SLP_BASE.to_string()],
            },
            FeedCandidate {
                id: FABS_ISSUE_ID,
                title: "InstSimplify wrongly folds fabs of a negated value".to_string(),
                body: body(
                    "The simplifier drops the fabs call below, which is wrong for \
                     inputs whose negation is negative.",
                    FABS_RUN_LINE,
                    FABS_REPRO_IR,
                ),
                labels: vec!["miscompilation".to_string(), "floating-point".to_string()],
                author: "nunoplopes".to_string(),
                timestamp: ts("2025-02-10T08:30:00Z"),
                fix: FixInfo {
                    sha: FABS_FIX.to_string(),
                    author_line: "Yingwei Zheng <dtcxzyw2333@gmail.com>".to_string(),
                    date: ts("2025-02-11T14:12:45Z"),
                    message: "[InstSimplify] Only fold fabs(x) to x when x is known \
                              never negative\n\nA bare sign-bit test mishandles -0.0 \
                              and negative NaNs. Query the FP class instead.\n\n\
                              Fixes #101333."
                        .to_string(),
                    patch: self.golden_diff(DemoIssue::FabsMiscompile),
                },
                ancestry: vec![FABS_MISSING_PARENT.to_string(), FABS_BASE.to_string()],
            },
            FeedCandidate {
                id: PEEL_ISSUE_ID,
                title: "Assertion peeling a loop with a large TTI peel preference"
                    .to_string(),
                body: body(
                    "Peeling a simple counted loop trips an assertion when the \
                     target requests more peeled iterations than the unroller \
                     allows.",
                    PEEL_RUN_LINE,
                    PEEL_REPRO_IR,
                ),
                labels: vec!["crash".to_string(), "llvm:LoopUnroll".to_string()],
                author: "loop-fuzz".to_string(),
                timestamp: ts("2025-03-05T10:00:00Z"),
                fix: FixInfo {
                    sha: PEEL_FIX.to_string(),
                    author_line: "Florian Hahn <flo@fhahn.com>".to_string(),
                    date: ts("2025-03-06T09:21:07Z"),
                    message: "[LoopPeel] Clamp the computed peel count to the \
                              unroller's budget\n\nFixes #102500."
                        .to_string(),
                    patch: self.golden_diff(DemoIssue::PeelCrash),
                },
                ancestry: vec![PEEL_PARENT.to_string(), PEEL_BASE.to_string()],
            },
            FeedCandidate {
                id: RETRACTED_ISSUE_ID,
                title: "Crash report retracted after triage".to_string(),
                body: body(
                    "Initially reported as a crash; triage concluded the input \
                     was invalid and the report was retracted.",
                    FLAKY_RUN_LINE,
                    FLAKY_REPRO_IR,
                ),
                labels: vec!["crash".to_string(), "wontfix".to_string()],
                author: "triage-bot".to_string(),
                timestamp: ts("2024-08-01T12:00:00Z"),
                fix: FixInfo {
                    sha: RETRACTED_FIX.to_string(),
                    author_line: "Demo Committer <demo@example.org>".to_string(),
                    date: ts("2024-08-02T16:40:00Z"),
                    message: "[ValueTracking] Clarify a comment".to_string(),
                    patch: self.golden_diff(DemoIssue::Retracted),
                },
                ancestry: vec![RETRACTED_BASE.to_string()],
            },
            FeedCandidate {
                id: FLAKY_ISSUE_ID,
                title: "Sporadic instcombine crash, cannot reproduce on clean build"
                    .to_string(),
                body: body(
                    "Crashed once in CI; the attached input runs clean on every \
                     clean rebuild since.",
                    FLAKY_RUN_LINE,
                    FLAKY_REPRO_IR,
                ),
                labels: vec!["crash".to_string()],
                author: "ci-watcher".to_string(),
                timestamp: ts("2024-09-01T09:15:00Z"),
                fix: FixInfo {
                    sha: FLAKY_FIX.to_string(),
                    author_line: "Demo Committer <demo@example.org>".to_string(),
                    date: ts("2024-09-02T11:00:00Z"),
                    message: "[InstCombine] Update a stale comment".to_string(),
                    patch: self.golden_diff(DemoIssue::Flaky),
                },
                ancestry: vec![FLAKY_BASE.to_string()],
            },
            FeedCandidate {
                id: REGRESS_ISSUE_ID,
                title: "GVN segfault forwarding a load through a clobbered pointer"
                    .to_string(),
                body: body(
                    "GVN dereferences a null available value while forwarding the \
                     second load.",
                    REGRESS_RUN_LINE,
                    REGRESS_REPRO_IR,
                ),
                labels: vec!["crash".to_string(), "llvm:GVN".to_string()],
                author: "miri-of-ir".to_string(),
                timestamp: ts("2025-01-15T20:05:00Z"),
                fix: FixInfo {
                    sha: REGRESS_FIX.to_string(),
                    author_line: "Demo Committer <demo@example.org>".to_string(),
                    date: ts("2025-01-16T08:55:30Z"),
                    message: "[GVN] Bail out when no dominating value is available\n\n\
                              Fixes #104242."
                        .to_string(),
                    patch: self.golden_diff(DemoIssue::Regressing),
                },
                ancestry: vec![REGRESS_BASE.to_string()],
            },
            FeedCandidate {
                id: DUPLICATE_ISSUE_ID,
                title: "Duplicate report of the SLP reduction-cost crash".to_string(),
                body: body(
                    "Same assertion as an earlier report; filed independently.",
                    SLP_RUN_LINE,
                    SLP_REPRO_IR,
                ),
                labels: vec!["crash-on-valid".to_string()],
                author: "second-reporter".to_string(),
                timestamp: ts("2024-12-01T00:00:00Z"),
                fix: FixInfo {
                    sha: SLP_FIX.to_string(),
                    author_line: "Alexey Bataev <a.bataev@outlook.com>".to_string(),
                    date: ts("2024-07-22T19:45:28Z"),
                    message: "[SLP]Fix a crash when costing min/max reductions"
                        .to_string(),
                    patch: self.golden_diff(DemoIssue::SlpCrash),
                },
                ancestry: vec![SLP_BASE.to_string()],
            },
        ]
    }

    /// The feed serialized as JSONL.
    pub fn feed_jsonl(&self) -> String {
        self.feed()
            .iter()
            .map(|c| {
                let mut line =
                    serde_json::to_string(c).expect("feed candidates serialize");
                line.push('\n');
                line
            })
            .collect()
    }

    /// Writes snapshots, the feed, and the documentation corpus under `root`.
    pub fn materialize(&self, root: &Path) -> io::Result<DemoPaths> {
        let snapshot_root = root.join("snapshots");
        for (commit, tree) in &self.trees {
            let commit_dir = snapshot_root.join(commit);
            for (path, content) in tree {
                let full = commit_dir.join(path);
                if let Some(parent) = full.parent() {
                    fs::create_dir_all(parent)?;
                }
                fs::write(full, content)?;
            }
        }

        let feed_path = root.join("feed.jsonl");
        fs::write(&feed_path, self.feed_jsonl())?;

        let doc_root = root.join("docs");
        fs::create_dir_all(&doc_root)?;
        for (name, content) in doc_corpus() {
            fs::write(doc_root.join(name), content)?;
        }

        Ok(DemoPaths {
            snapshot_root,
            feed_path,
            doc_root,
        })
    }

    /// A toolchain over this world: simulated compiler, scripted debugger,
    /// snapshots under `root`. Materializes the world first.
    pub fn toolchain(&self, root: &Path) -> io::Result<(Toolchain, DemoPaths)> {
        let paths = self.materialize(root)?;
        let tc = Toolchain::new(
            Box::new(SimulatedCompiler::new(self.clone())),
            Box::new(debugger_scripts()),
            ToolchainConfig::default(),
            paths.snapshot_root.clone(),
        );
        Ok((tc, paths))
    }
}

/// Reference documentation available to agents via the doc-search tools.
pub fn doc_corpus() -> Vec<(&'static str, &'static str)> {
    vec![
        (
            "langref-fabs.md",
            "# llvm.fabs intrinsic\n\n\
             `llvm.fabs.*` returns the magnitude of its operand: the same \
             value with a cleared sign bit. It is defined for all inputs, \
             including negative zero (which maps to positive zero) and NaNs \
             (the sign bit of the payload is cleared, quiet bit preserved).\n\n\
             A transform may drop a `fabs` only when the operand is proven \
             to never be negative, where negative includes -0.0 and NaNs \
             with the sign bit set.\n",
        ),
        (
            "langref-smax.md",
            "# llvm.smax intrinsic\n\n\
             `llvm.smax.*` returns the larger of two signed integers. Chains \
             of smax calls form min/max reductions, which vectorizers may \
             widen; cost queries for the widened form must use the canonical \
             integer type of the target.\n",
        ),
        (
            "passes-overview.md",
            "# Middle-end passes referenced by the demo world\n\n\
             - instsimplify: folds instructions to existing values, never \
               creates instructions.\n\
             - instcombine: peephole combiner, may create instructions.\n\
             - slp-vectorizer: bottom-up straight-line vectorizer.\n\
             - loop-unroll: unrolling driver, owns loop peeling.\n\
             - gvn: global value numbering, forwards loads.\n",
        ),
        (
            "api-knownfpclass.md",
            "# KnownFPClass queries\n\n\
             `computeKnownFPClass(V, Q, Interested)` returns which FP classes \
             the value can inhabit. `Known.isKnownNever(fcNegative)` proves a \
             value is never negative (covers -0.0 and sign-set NaNs), the \
             correct precondition for dropping a fabs.\n",
        ),
    ]
}

/// Debugger scripts for the demo builds: canned responses for the commands
/// agents commonly issue.
pub fn debugger_scripts() -> ScriptedDebuggerFactory {
    let mut responses = BTreeMap::new();
    responses.insert(
        "run".to_string(),
        "Starting program: opt\n\
         Program received signal SIGABRT, Aborted.\n\
         0x00007f0e31e969fc in __pthread_kill_implementation ()"
            .to_string(),
    );
    responses.insert(
        "bt".to_string(),
        "#0  __pthread_kill_implementation ()\n\
         #1  raise ()\n\
         #2  abort ()\n\
         #3  __assert_fail ()\n\
         #4  llvm::slpvectorizer::BoUpSLP::getEntryCost (this=0x5555559d0000, E=0x5555559e2c40)\n\
         \x20   at llvm/lib/Transforms/Vectorize/SLPVectorizer.cpp:21\n\
         #5  llvm::slpvectorizer::BoUpSLP::getTreeCost ()\n"
            .to_string(),
    );
    responses.insert(
        "info args".to_string(),
        "E = 0x5555559e2c40\nVectorizedVals = {Length = 3}".to_string(),
    );
    let generic = DebugScript {
        responses,
        fallback: None,
    };

    let mut scripts = BTreeMap::new();
    scripts.insert(String::new(), generic);
    ScriptedDebuggerFactory::new(scripts)
}

#[cfg(test)]
mod tests;
