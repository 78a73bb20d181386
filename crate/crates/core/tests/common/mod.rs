//! Fixtures and independent oracles shared by the integration tests and
//! the acceptance runner.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use fuzztune::corpus::{Corpus, Language, Program};
use fuzztune::fuzzer::{Campaign, FuzzConfig, FuzzReport, Signature, Stage};
use fuzztune::repair::{adapter_for, repair_loop, FixOptions, RepairedProgram};
use fuzztune::target::{ExecLimits, ExecStatus, ScriptOutcome, ScriptedTarget, Target, Tracer};
use fuzztune::toolchain::Toolchain;
use proptest::prelude::*;

// ---------------------------------------------------------------- repair

pub fn repair_cpp(id: &str, src: &str) -> RepairedProgram {
    let tc = Toolchain::default();
    let adapter = adapter_for(Language::Cpp, &tc, FixOptions::default()).unwrap();
    repair_loop(&Program::from_source(id, Language::Cpp, src), adapter.as_ref(), 10).unwrap()
}

/// Two broken programs per fix rule, tagged with the rule that must fire.
pub const RULE_FIXTURES: &[(&str, &str, &str)] = &[
    (
        "header/printf",
        "missing_header",
        "int main(){int a,b;scanf(\"%d%d\",&a,&b);printf(\"%d\\n\",a+b);return 0;}\n",
    ),
    (
        "header/string",
        "missing_header",
        "int main()\n{\n    string s;\n    cin >> s;\n    cout << s.size() << endl;\n    return 0;\n}\n",
    ),
    (
        "return/void",
        "missing_return",
        "#include <cstdio>\nvoid main()\n{\n    printf(\"hi\\n\");\n}\n",
    ),
    (
        "return/implicit",
        "missing_return",
        "#include <cstdio>\nmain()\n{\n    int x = 0;\n    scanf(\"%d\", &x);\n    printf(\"%d\\n\", x * 2);\n}\n",
    ),
    (
        "keyword/count",
        "reserved_keyword_misuse",
        "#include <iostream>\n#include <algorithm>\nusing namespace std;\nint count = 0;\nint main()\n{\n    count++;\n    cout << count << endl;\n    return 0;\n}\n",
    ),
    (
        "keyword/new",
        "reserved_keyword_misuse",
        "#include <cstdio>\nint main()\n{\n    int new = 3;\n    printf(\"%d\\n\", new);\n    return 0;\n}\n",
    ),
    (
        "struct/after",
        "struct_missing_semicolon",
        "#include <cstdio>\nstruct P { int x; int y; }\nint main()\n{\n    P p;\n    p.x = 1;\n    p.y = 2;\n    printf(\"%d\\n\", p.x + p.y);\n    return 0;\n}\n",
    ),
    (
        "struct/member",
        "struct_missing_semicolon",
        "#include <cstdio>\nstruct Node { int v; int w };\nint main()\n{\n    Node n;\n    n.v = 3;\n    n.w = 4;\n    printf(\"%d\\n\", n.v * n.w);\n    return 0;\n}\n",
    ),
    (
        "undeclared/array",
        "undeclared_identifier",
        "#include <cstdio>\nint a[MAXN];\nint main()\n{\n    int n = 0;\n    scanf(\"%d\", &n);\n    if (n > 0 && n < MAXN) a[n] = n;\n    printf(\"%d\\n\", n);\n    return 0;\n}\n",
    ),
    (
        "undeclared/wide",
        "undeclared_identifier",
        "#include <cstdio>\nint main()\n{\n    long long x = INF;\n    printf(\"%lld\\n\", x > 0 ? 1LL : 0LL);\n    return 0;\n}\n",
    ),
];

/// Compilable control programs and a cosmetically broken variant of each
/// whose repair restores the original behavior.
pub const CONTROL_PAIRS: &[(&str, &str, &str)] = &[
    (
        "control/sum",
        "#include <cstdio>\nint main(){int a=0,b=0;scanf(\"%d%d\",&a,&b);printf(\"%d\\n\",a+b);return 0;}\n",
        "int main(){int a=0,b=0;scanf(\"%d%d\",&a,&b);printf(\"%d\\n\",a+b);return 0;}\n",
    ),
    (
        "control/point",
        "#include <cstdio>\nstruct Pt { int x; int y; };\nint main(){Pt p; p.x=0; p.y=0; scanf(\"%d %d\",&p.x,&p.y); printf(\"%d\\n\", p.x*p.x+p.y*p.y); return 0;}\n",
        "#include <cstdio>\nstruct Pt { int x; int y; }\nint main(){Pt p; p.x=0; p.y=0; scanf(\"%d %d\",&p.x,&p.y); printf(\"%d\\n\", p.x*p.x+p.y*p.y); return 0;}\n",
    ),
    (
        "control/reverse",
        "#include <cstdio>\n#include <cstring>\nint main(){char s[64]={0}; if(scanf(\"%63s\",s)!=1){puts(\"none\");return 0;} for(int i=strlen(s)-1;i>=0;i--) putchar(s[i]); putchar('\\n'); return 0;}\n",
        "#include <cstdio>\n#include <cstring>\nvoid main(){char s[64]={0}; if(scanf(\"%63s\",s)!=1){puts(\"none\");return;} for(int i=strlen(s)-1;i>=0;i--) putchar(s[i]); putchar('\\n');}\n",
    ),
    (
        "control/bound",
        "#include <cstdio>\nconst int MAXN = 100000;\nint main(){long long n=0; scanf(\"%lld\",&n); printf(\"%s\\n\", n < MAXN ? \"small\" : \"large\"); return 0;}\n",
        "#include <cstdio>\nint main(){long long n=0; scanf(\"%lld\",&n); printf(\"%s\\n\", n < MAXN ? \"small\" : \"large\"); return 0;}\n",
    ),
    (
        "control/total",
        "#include <cstdio>\nint main(){int total=0,x; while(scanf(\"%d\",&x)==1) total+=x; printf(\"%d\\n\",total); return 0;}\n",
        "#include <cstdio>\nint main(){int new=0,x; while(scanf(\"%d\",&x)==1) new+=x; printf(\"%d\\n\",new); return 0;}\n",
    ),
];

pub const CONTROL_STDINS: [&[u8]; 3] = [b"3 4\n", b"120000 -7\n", b"abc\n"];

/// 40 programs: compilable bases and single or combined breakages, plus one
/// genuine type error.
pub fn mixed_repair_corpus() -> Vec<(String, String)> {
    let bases = [
        "#include <cstdio>\nint main(){int n=0; scanf(\"%d\",&n); int s=0; for(int i=1;i<=n&&i<1000;i++) s+=i; printf(\"%d\\n\",s); return 0;}\n",
        "#include <iostream>\nusing namespace std;\nint main(){int a=0,b=0; cin>>a>>b; if(a<b) cout<<b<<endl; else cout<<a<<endl; return 0;}\n",
        "#include <cstdio>\n#include <cstring>\nint main(){char s[100]={0}; scanf(\"%99s\",s); int v=0; for(int i=0;s[i];i++) if(strchr(\"aeiou\",s[i])) v++; printf(\"%d\\n\",v); return 0;}\n",
        "#include <cstdio>\nint main(){int n=0; scanf(\"%d\",&n); int p=n>1; for(int d=2;d*d<=n;d++) if(n%d==0) p=0; puts(p?\"yes\":\"no\"); return 0;}\n",
        "#include <iostream>\nint main(){long long a=0,b=0; std::cin>>a>>b; while(b){long long t=a%b; a=b; b=t;} std::cout<<a<<std::endl; return 0;}\n",
        "#include <cstdio>\nint main(){int x=0,c=0; scanf(\"%d\",&x); if(x<0) x=-x; do{c++; x/=10;}while(x); printf(\"%d\\n\",c); return 0;}\n",
        "#include <cstdio>\nint main(){int a[3]={0,0,0}; scanf(\"%d%d%d\",&a[0],&a[1],&a[2]); for(int i=0;i<3;i++) for(int j=i+1;j<3;j++) if(a[j]<a[i]){int t=a[i];a[i]=a[j];a[j]=t;} printf(\"%d %d %d\\n\",a[0],a[1],a[2]); return 0;}\n",
        "#include <cstdio>\nint main(){int n=0; scanf(\"%d\",&n); long long f0=0,f1=1; for(int i=0;i<n&&i<90;i++){long long t=f0+f1; f0=f1; f1=t;} printf(\"%lld\\n\",f0); return 0;}\n",
    ];
    let mut out = Vec::new();
    for (i, b) in bases.iter().enumerate() {
        let drop_includes: String = b.lines().filter(|l| !l.starts_with("#include") && !l.starts_with("using")).map(|l| format!("{l}\n")).collect();
        let void_main = b.replacen("int main()", "void main()", 1).replace("return 0;", "");
        let combined = drop_includes.replacen("int main()", "main()", 1).replace("return 0;", "");
        let constant = b.replacen("int main(){", "int main(){ int lim = LIMIT; (void)lim;", 1);
        let variants = [b.to_string(), drop_includes, void_main, combined, constant];
        for (k, v) in variants.into_iter().enumerate() {
            out.push((format!("mix{i}/{k}"), v));
        }
    }
    out[39] = (
        "mix7/4".into(),
        "#include <cstdio>\nint main(){int x = \"not a number\"; printf(\"%d\\n\", x); return 0;}\n".into(),
    );
    out
}

// ------------------------------------------------------------- fuzzing

pub const STAIRCASE_KEY: &[u8; 8] = b"FUZZING!";

/// Eight nested byte comparisons; level i reports edge i.
pub fn staircase() -> ScriptedTarget {
    ScriptedTarget::new("staircase", |input: &[u8], t: &mut Tracer| {
        t.hit(0);
        for (i, &c) in STAIRCASE_KEY.iter().enumerate() {
            if input.get(i) != Some(&c) {
                break;
            }
            t.hit(i as u16 + 1);
        }
        ScriptOutcome::Exit
    })
}

/// Deepest staircase level whose edge any execution reached.
pub fn staircase_depth(report: &FuzzReport) -> usize {
    report.stats.edges_observed.saturating_sub(1)
}

#[derive(Debug, Clone)]
pub struct Gate {
    pub pos: usize,
    pub byte: u8,
    pub edge: u16,
    /// Only checked when the previous gate passed.
    pub nested: bool,
    pub outcome: u8,
}

/// A random deterministic scripted program.
#[derive(Debug, Clone)]
pub struct Maze {
    pub gates: Vec<Gate>,
    pub echo: bool,
}

impl Maze {
    pub fn run(&self, input: &[u8], t: &mut Tracer) -> ScriptOutcome {
        t.hit(0);
        for _ in 0..input.len() % 6 {
            t.hit(1);
        }
        if self.echo {
            t.print(input);
        }
        let mut prev = true;
        for g in &self.gates {
            if g.nested && !prev {
                prev = false;
                continue;
            }
            prev = input.get(g.pos) == Some(&g.byte);
            if prev {
                t.hit(g.edge);
                match g.outcome {
                    1 => return ScriptOutcome::Crash,
                    2 => return ScriptOutcome::Hang,
                    _ => {}
                }
            }
        }
        ScriptOutcome::Exit
    }

    pub fn target(&self, limits: ExecLimits) -> ScriptedTarget {
        let m = self.clone();
        ScriptedTarget::new("maze", move |i: &[u8], t: &mut Tracer| m.run(i, t)).with_limits(limits)
    }
}

pub fn gate() -> impl Strategy<Value = Gate> {
    (0usize..6, prop_oneof![Just(b'\n'), Just(0u8), Just(b'A'), any::<u8>()], 2u16..64, any::<bool>(), prop_oneof![8 => Just(0u8), 1 => Just(1u8), 1 => Just(2u8)])
        .prop_map(|(pos, byte, edge, nested, outcome)| Gate { pos, byte, edge, nested, outcome })
}

pub fn maze() -> impl Strategy<Value = Maze> {
    (proptest::collection::vec(gate(), 0..6), any::<bool>()).prop_map(|(gates, echo)| Maze { gates, echo })
}

#[derive(Debug, Clone)]
pub struct Case {
    pub maze: Maze,
    pub seeds: Vec<Vec<u8>>,
    pub config: FuzzConfig,
    pub timeout_ms: u64,
}

pub fn case() -> impl Strategy<Value = Case> {
    (
        maze(),
        proptest::collection::vec(proptest::collection::vec(any::<u8>(), 0..8), 0..3),
        any::<u64>(),
        (20u64..400, 1u32..24, 0u32..6, 1usize..33),
        (prop_oneof![Just(None), (1u64..300).prop_map(Some)], 0u32..4, prop_oneof![9 => Just(true), 1 => Just(false)]),
        (1u64..2000, 1u64..50),
    )
        .prop_map(|(maze, seeds, rng_seed, (max_execs, havoc, splice, max_len), (exhaust, calib, guided), (budget_ms, timeout_ms))| {
            let config = FuzzConfig {
                budget_minutes: budget_ms as f64 / 60_000.0,
                max_input_len: max_len,
                rng_seed,
                havoc_iterations_per_entry: havoc,
                splice_iterations_per_entry: splice,
                exhaust_after: exhaust,
                max_execs: Some(max_execs),
                calibration_runs: calib,
                coverage_guided: guided,
                ..FuzzConfig::default()
            };
            Case {
                maze,
                seeds,
                config,
                timeout_ms,
            }
        })
}

fn limits_for(case: &Case) -> ExecLimits {
    ExecLimits {
        timeout_ms: case.timeout_ms,
        ..ExecLimits::default()
    }
}

struct Trace {
    /// (execs, elapsed_ms, accumulator pairs) at every callback.
    points: Vec<(u64, u64, Vec<(u16, u8)>)>,
}

fn run_traced(case: &Case) -> (FuzzReport, Trace) {
    let mut target = case.maze.target(limits_for(case));
    let mut points = Vec::new();
    let report = {
        let campaign = Campaign::new(&mut target, case.config.clone())
            .expect("valid config")
            .with_observer(|s| points.push((s.execs, s.elapsed_ms, s.accumulator.pairs())));
        campaign.run(&case.seeds)
    };
    (report, Trace { points })
}

fn fingerprint(r: &FuzzReport) -> String {
    format!("{r:?}")
}

/// Checks the campaign invariants on one random case; the error names
/// the violated one.
pub fn check_campaign_invariants(case: &Case) -> Result<(), String> {
    let (report, trace) = run_traced(case);
    let budget_ms = case.config.budget_ms();

    // budget bound
    let max = case.config.max_execs.unwrap();
    if report.stats.execs_total > max {
        return Err(format!("budget: {} execs > limit {max}", report.stats.execs_total));
    }
    let mut last = (0u64, 0u64);
    for &(execs, elapsed, _) in &trace.points {
        if execs > last.0 && last.1 >= budget_ms {
            return Err(format!("budget: exec {execs} started at {} ms >= budget {budget_ms}", last.1));
        }
        last = (execs, elapsed);
    }

    // coverage monotonicity
    for w in trace.points.windows(2) {
        let (a, b) = (&w[0].2, &w[1].2);
        if b.len() < a.len() || !a.iter().all(|p| b.binary_search(p).is_ok()) {
            return Err(format!("monotonicity: accumulator shrank after {} execs", w[1].0));
        }
    }

    // queue signature distinctness (and novelty at insertion)
    let mut seen: Vec<(u16, u8)> = Vec::new();
    for (i, e) in report.queue.iter().enumerate() {
        if report.queue[..i].iter().any(|o| o.signature == e.signature) {
            return Err(format!("distinctness: entry {i} repeats a signature"));
        }
        let novel = e.signature.0.iter().any(|p| seen.binary_search(p).is_err());
        if case.config.coverage_guided && i > 0 && !novel {
            return Err(format!("distinctness: entry {i} added no new (edge, bucket) pair"));
        }
        if (e.parent.is_none()) != (e.stage_found == Stage::Seed) {
            return Err(format!("queue entry {i}: parent/stage mismatch"));
        }
        if e.id as usize != i {
            return Err(format!("queue entry {i} has id {}", e.id));
        }
        for p in &e.signature.0 {
            if let Err(at) = seen.binary_search(p) {
                seen.insert(at, *p);
            }
        }
    }

    // replay fidelity
    let mut fresh = case.maze.target(limits_for(case));
    for e in &report.queue {
        let r = fresh.execute(&e.input).map_err(|x| x.to_string())?;
        if r.status != ExecStatus::Ok {
            return Err(format!("replay: queue entry {} replays as {:?}", e.id, r.status));
        }
        if r.coverage.signature() != e.signature || e.unstable {
            return Err(format!("replay: queue entry {} signature differs", e.id));
        }
    }
    for c in &report.crashes {
        if fresh.execute(c).map_err(|x| x.to_string())?.status != ExecStatus::Crash {
            return Err("replay: saved crash does not crash".into());
        }
    }
    for h in &report.hangs {
        if fresh.execute(h).map_err(|x| x.to_string())?.status != ExecStatus::Hang {
            return Err("replay: saved hang does not hang".into());
        }
    }
    for e in &report.queue {
        if report.crashes.contains(&e.input) || report.hangs.contains(&e.input) {
            return Err("queue contains a fault input".into());
        }
    }

    // seeded determinism
    let (again, _) = run_traced(case);
    if fingerprint(&again) != fingerprint(&report) {
        return Err("determinism: second run differs".into());
    }
    Ok(())
}

pub fn signature_union(report: &FuzzReport) -> Signature {
    let mut all: Vec<(u16, u8)> = report.queue.iter().flat_map(|e| e.signature.0.iter().copied()).collect();
    all.sort_unstable();
    all.dedup();
    Signature(all)
}

// ---------------------------------------------------------------- eval

/// Brute-force MAP@R: cosine computed directly from its definition and
/// each candidate's rank obtained by counting the candidates ahead of it.
pub fn brute_force_map_at_r(ids: &[String], labels: &[String], vectors: &[Vec<f64>]) -> (f64, BTreeMap<String, f64>) {
    let n = ids.len();
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let cos = |a: &[f64], b: &[f64]| {
        let (na, nb) = (norm(a), norm(b));
        let na = if na == 0.0 { 1.0 } else { na };
        let nb = if nb == 0.0 { 1.0 } else { nb };
        a.iter().zip(b).map(|(x, y)| (x / na) * (y / nb)).sum::<f64>()
    };
    let mut per: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    let mut all = Vec::new();
    for q in 0..n {
        let r = labels.iter().filter(|l| **l == labels[q]).count() - 1;
        let sims: Vec<f64> = (0..n).map(|j| cos(&vectors[q], &vectors[j])).collect();
        let ahead = |j: usize| -> usize {
            (0..n)
                .filter(|&k| k != q && k != j)
                .filter(|&k| sims[k] > sims[j] || (sims[k] == sims[j] && ids[k] < ids[j]))
                .count()
        };
        let mut ranked: Vec<Option<usize>> = vec![None; n - 1];
        for j in (0..n).filter(|&j| j != q) {
            ranked[ahead(j)] = Some(j);
        }
        let mut ap = 0.0;
        for k in 1..=r {
            let item = ranked[k - 1].unwrap();
            if labels[item] == labels[q] {
                let rel_in_top_k = ranked[..k].iter().filter(|j| labels[j.unwrap()] == labels[q]).count();
                ap += rel_in_top_k as f64 / k as f64;
            }
        }
        ap /= r as f64;
        per.entry(labels[q].clone()).or_default().push(ap);
        all.push((ids[q].clone(), ap));
    }
    all.sort_by(|a, b| a.0.cmp(&b.0));
    let overall = all.iter().map(|(_, a)| a).sum::<f64>() / n as f64;
    (overall, per.into_iter().map(|(k, v)| (k, v.iter().sum::<f64>() / v.len() as f64)).collect())
}

// ---------------------------------------------------------------- corpora

pub struct EvalInstance {
    pub ids: Vec<String>,
    pub labels: Vec<String>,
    pub vectors: Vec<Vec<f64>>,
}

/// Random table with n <= 30 and dim <= 8; every class has at least two
/// members, ids are shuffled against row order, and some rows are exact
/// copies of earlier rows (or zero) so that similarity ties occur.
pub fn random_eval_instance(rng: &mut impl rand::Rng) -> EvalInstance {
    use rand::seq::SliceRandom;
    let n = rng.gen_range(2..=30);
    let dim = rng.gen_range(1..=8);
    let classes = rng.gen_range(1..=n / 2);
    let mut class_of: Vec<usize> = (0..n).map(|i| if i < 2 * classes { i / 2 } else { rng.gen_range(0..classes) }).collect();
    class_of.shuffle(rng);
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(rng);
    let mut vectors: Vec<Vec<f64>> = Vec::with_capacity(n);
    for i in 0..n {
        let roll: f64 = rng.gen();
        let v = if i > 0 && roll < 0.25 {
            vectors[rng.gen_range(0..i)].clone()
        } else if roll < 0.28 {
            vec![0.0; dim]
        } else {
            (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect()
        };
        vectors.push(v);
    }
    EvalInstance {
        ids: perm.iter().map(|p| format!("q{p:03}")).collect(),
        labels: class_of.iter().map(|c| format!("c{c}")).collect(),
        vectors,
    }
}

impl EvalInstance {
    pub fn table(&self) -> fuzztune::eval::EmbeddingTable {
        fuzztune::eval::EmbeddingTable::new(self.ids.clone(), self.labels.clone(), self.vectors.clone()).unwrap()
    }

    pub fn oracle(&self) -> (f64, BTreeMap<String, f64>) {
        brute_force_map_at_r(&self.ids, &self.labels, &self.vectors)
    }
}

/// Max absolute difference against the oracle, overall and per class.
pub fn eval_oracle_gap(inst: &EvalInstance) -> f64 {
    let got = fuzztune::eval::map_at_r(&inst.table(), fuzztune::eval::Similarity::Cosine).unwrap();
    let (overall, per) = inst.oracle();
    assert_eq!(got.per_problem.keys().collect::<Vec<_>>(), per.keys().collect::<Vec<_>>());
    per.iter().map(|(k, v)| (got.per_problem[k] - v).abs()).fold((got.map_at_r - overall).abs(), f64::max)
}

pub fn synthetic_corpus(problems: usize, per_problem: usize) -> Corpus {
    let mut programs = Vec::new();
    for p in 0..problems {
        for k in 0..per_problem {
            programs.push(Program::from_source(&format!("p{p:03}/{k:03}.txt"), Language::Cpp, format!("int main(){{return {k};}}\n")));
        }
    }
    Corpus {
        programs,
        warnings: Vec::new(),
    }
}

/// Ten problem templates; `{V}` is a per-program variable name.
const E2E_PROBLEMS: [&str; 10] = [
    "#include <cstdio>\nint main(){int {V}=0,b=0; scanf(\"%d %d\",&{V},&b); printf(\"%d\\n\",{V}+b); return 0;}\n",
    "#include <cstdio>\nint main(){int n=0,{V}=-1000000,x; scanf(\"%d\",&n); for(int i=0;i<n&&i<50;i++){ if(scanf(\"%d\",&x)!=1) break; if(x>{V}) {V}=x; } printf(\"%d\\n\",{V}); return 0;}\n",
    "#include <cstdio>\nint main(){char s[128]={0}; int {V}=0; if(!fgets(s,sizeof s,stdin)) return 0; for(int i=0;s[i];i++) if(s[i]=='a'||s[i]=='e'||s[i]=='i'||s[i]=='o'||s[i]=='u') {V}++; printf(\"%d\\n\",{V}); return 0;}\n",
    "#include <iostream>\n#include <string>\nusing namespace std;\nint main(){string {V}; getline(cin,{V}); for(int i=(int){V}.size()-1;i>=0;i--) cout<<{V}[i]; cout<<endl; return 0;}\n",
    "#include <cstdio>\nint main(){int {V}=0; scanf(\"%d\",&{V}); bool p={V}>1; for(int d=2;d*d<={V};d++) if({V}%d==0){p=false;break;} puts(p?\"prime\":\"composite\"); return 0;}\n",
    "#include <cstdio>\nint main(){int n=0; scanf(\"%d\",&n); long long {V}=0,b=1; for(int i=0;i<n&&i<80;i++){long long t={V}+b; {V}=b; b=t;} printf(\"%lld\\n\",{V}); return 0;}\n",
    "#include <cstdio>\nint main(){int {V}[3]={0,0,0}; scanf(\"%d %d %d\",&{V}[0],&{V}[1],&{V}[2]); if({V}[0]>{V}[1]){int t={V}[0];{V}[0]={V}[1];{V}[1]=t;} if({V}[1]>{V}[2]){int t={V}[1];{V}[1]={V}[2];{V}[2]=t;} if({V}[0]>{V}[1]){int t={V}[0];{V}[0]={V}[1];{V}[1]=t;} printf(\"%d %d %d\\n\",{V}[0],{V}[1],{V}[2]); return 0;}\n",
    "#include <cstdio>\nint main(){long long {V}=0,b=0; scanf(\"%lld %lld\",&{V},&b); if({V}<0) {V}=-{V}; if(b<0) b=-b; while(b){long long t={V}%b; {V}=b; b=t;} printf(\"%lld\\n\",{V}); return 0;}\n",
    "#include <cstdio>\nint main(){char {V}[64]={0}; if(scanf(\"%63s\",{V})!=1){puts(\"0\");return 0;} int c=0; for(int i=0;{V}[i];i++) if({V}[i]>='0'&&{V}[i]<='9') c++; printf(\"%d\\n\",c); return 0;}\n",
    "#include <cstdio>\n#include <cstring>\nint main(){char {V}[64]={0}; if(scanf(\"%63s\",{V})!=1) return 0; int n=strlen({V}); bool ok=true; for(int i=0;i<n/2;i++) if({V}[i]!={V}[n-1-i]) ok=false; puts(ok?\"yes\":\"no\"); return 0;}\n",
];

const E2E_NAMES: [&str; 10] = ["a", "val", "cur", "acc", "num", "res", "arr", "x1", "buf", "tmp"];

/// 10 problems x 10 programs in the POJ-104 layout; every fifth program
/// needs repair (headers dropped or `void main`).
pub fn write_e2e_corpus(root: &Path) {
    for (p, tpl) in E2E_PROBLEMS.iter().enumerate() {
        let dir = root.join(format!("{}", p + 1));
        fs::create_dir_all(&dir).unwrap();
        for (k, name) in E2E_NAMES.iter().enumerate() {
            let mut src = tpl.replace("{V}", name);
            if k == 4 {
                src = src.lines().filter(|l| !l.starts_with("#include")).map(|l| format!("{l}\n")).collect();
            }
            if k == 9 {
                src = src.replacen("int main(){", "void main(){", 1).replace("return 0;", "return;");
            }
            fs::write(dir.join(format!("{}.txt", k + 1)), src).unwrap();
        }
    }
}

// ---------------------------------------------------------------- prompt

/// (template, input text, output text, expected rendering), written out by hand.
pub const PROMPT_GOLDENS: &[(&str, &str, &str, &str)] = &[
    ("nl_a", "3 4\n", "7\n", "[SEP]input: 3 4\n,output: 7\n"),
    ("nl_a", "", "", "[SEP]input: ,output: "),
    ("nl_a", "é\t\"q\"", "a\\b", "[SEP]input: é\t\"q\",output: a\\b"),
    ("nl_b", "3 4\n", "7\n", "[SEP]input is 3 4\nandoutput is 7\n"),
    ("nl_b", "", "", "[SEP]input is andoutput is "),
    ("nl_b", "é\t\"q\"", "a\\b", "[SEP]input is é\t\"q\"andoutput is a\\b"),
    ("pl_cpp", "3 4\n", "7\n", "[SEP]cin>>3 4\n;cout<<7\n"),
    ("pl_cpp", "", "", "[SEP]cin>>;cout<<"),
    ("pl_cpp", "é\t\"q\"", "a\\b", "[SEP]cin>>é\t\"q\";cout<<a\\b"),
    ("pl_java", "3 4\n", "7\n", "[SEP]System.in 3 4\n;System.out7\n"),
    ("pl_java", "", "", "[SEP]System.in ;System.out"),
    ("pl_java", "é\t\"q\"", "a\\b", "[SEP]System.in é\t\"q\";System.outa\\b"),
    ("pl_python", "3 4\n", "7\n", "[SEP]input()3 4\n\nprint7\n"),
    ("pl_python", "", "", "[SEP]input()\nprint"),
    ("pl_python", "é\t\"q\"", "a\\b", "[SEP]input()é\t\"q\"\nprinta\\b"),
];

/// Renders every golden and returns the mismatches.
pub fn prompt_golden_mismatches() -> Vec<String> {
    use fuzztune::prompt::{render_texts, PromptTemplate, TemplateKind};
    let mut bad = Vec::new();
    for (kind, input, output, expect) in PROMPT_GOLDENS {
        let t = PromptTemplate::new(kind.parse::<TemplateKind>().unwrap());
        let got = render_texts(input, output, &t);
        if got.as_bytes() != expect.as_bytes() {
            bad.push(format!("{kind} {input:?}/{output:?}: got {got:?}, want {expect:?}"));
        }
    }
    if !render_texts("x", "y", &PromptTemplate::new(TemplateKind::None)).is_empty() {
        bad.push("none template rendered text".into());
    }
    bad
}

// ---------------------------------------------------------------- splits

fn problem_set(corpus: &Corpus, ids: &[String]) -> std::collections::BTreeSet<String> {
    ids.iter().map(|id| corpus.get(id).unwrap().problem_id.clone()).collect()
}

fn is_subset(small: &[String], big: &[String]) -> bool {
    let big: std::collections::HashSet<&String> = big.iter().collect();
    small.iter().all(|x| big.contains(x))
}

/// Checks the 64/16/24 clone split of 104 problems and the nested 4:1
/// program subsamples at 10/20/40%, all against hand-computed counts.
/// Returns one message per violated expectation.
pub fn split_arithmetic_failures() -> Vec<String> {
    use fuzztune::corpus::{split, subsample, Fractions, SplitSpec, SplitUnit};
    use num_rational::Ratio;
    let mut bad = Vec::new();
    let mut expect = |what: &str, got: usize, want: usize| {
        if got != want {
            bad.push(format!("{what}: {got} != {want}"));
        }
    };
    let corpus = synthetic_corpus(104, 50);
    let spec = SplitSpec::clone_detection(Fractions::from_weights(64, 16, 24).unwrap(), 11);
    let s = split(&corpus, &spec).unwrap();
    expect("train problems", problem_set(&corpus, &s.train).len(), 64);
    expect("val problems", problem_set(&corpus, &s.val).len(), 16);
    expect("test problems", problem_set(&corpus, &s.test).len(), 24);
    expect("train programs", s.train.len(), 64 * 50);
    expect("val programs", s.val.len(), 16 * 50);
    expect("test programs", s.test.len(), 24 * 50);
    let mut prev: Option<fuzztune::corpus::Splits> = None;
    for (pct, want_train, want_val) in [(10u64, 320, 80), (20, 640, 160), (40, 1280, 320)] {
        let sub = subsample(&corpus, &s, Ratio::new(pct, 100), SplitUnit::Programs, 5).unwrap();
        expect(&format!("{pct}% train"), sub.train.len(), want_train);
        expect(&format!("{pct}% val"), sub.val.len(), want_val);
        expect(&format!("{pct}% test unchanged"), usize::from(sub.test != s.test), 0);
        expect(&format!("{pct}% train within split"), usize::from(!is_subset(&sub.train, &s.train)), 0);
        expect(&format!("{pct}% val within split"), usize::from(!is_subset(&sub.val, &s.val)), 0);
        if let Some(p) = &prev {
            expect(&format!("{pct}% nests train"), usize::from(!is_subset(&p.train, &sub.train)), 0);
            expect(&format!("{pct}% nests val"), usize::from(!is_subset(&p.val, &sub.val)), 0);
        }
        prev = Some(sub);
    }
    bad
}
