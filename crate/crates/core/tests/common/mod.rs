#![allow(dead_code)]

pub mod oracles;

use std::path::PathBuf;

use testmap_core::classfile::{load_inputs, ClassParser, ClassPool, Input};
use testmap_core::knowledge::KnowledgeBase;
use testmap_core::Analysis;

pub fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

pub fn corpus(name: &str) -> PathBuf {
    fixtures().join("classes").join(name)
}

pub fn pool(name: &str) -> ClassPool {
    load_inputs(&[Input::application(corpus(name))], &ClassParser::default()).expect("fixture corpus loads")
}

pub fn analyze(name: &str) -> Analysis {
    analyze_with(name, KnowledgeBase::builtin())
}

pub fn analyze_with(name: &str, kb: KnowledgeBase) -> Analysis {
    Analysis::run(&[Input::application(corpus(name))], kb, &ClassParser::default()).expect("fixture corpus analyzes")
}

/// Every fixture corpus in one analysis.
pub fn analyze_all(kb: KnowledgeBase) -> Analysis {
    let inputs: Vec<Input> = ["figures", "hierarchy", "metrics"].iter().map(|c| Input::application(corpus(c))).collect();
    Analysis::run(&inputs, kb, &ClassParser::default()).expect("fixture corpora analyze")
}
