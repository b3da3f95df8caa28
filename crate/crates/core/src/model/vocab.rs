//! Entries of the built-in `builtin:code-v1` vocabulary.
//!
//! Order matters: token ids are assigned in the order produced here, after
//! the 256 single bytes. Changing this file changes the tokenizer, so the id
//! must be bumped with it.

use crate::lexicon;

const SPACE_RUNS: usize = 16;

const PUNCT: &[&str] = &[
    "(", ")", "[", "]", "{", "}", ":", ",", ".", ";", "=", "==", "!=", "<", ">", "<=", ">=",
    "+", "-", "*", "/", "//", "%", "**", "+=", "-=", "*=", "/=", "//=", "%=", "->", "@", "#",
    "'", "\"", "\"\"\"", "()", "():", "(),", "[]", "{}", "),", "):", "))", ")]", "])", "],",
    "]:", "}", "},", "(\"", "\")", "('", "')", "\",", "',", "\":", "':", "[\"", "\"]", "['",
    "']", ")\n", ",\n", ":\n", "...", "!", "&", "|", "^", "~", "<<", ">>", ")[", "](", ")(",
    ").", "].", "[:", ":]", "[-", "-1", ")),", "))\n", "\\", "\\n", "%s", "%d", "{:", "f\"",
];

/// Base words. The first `COMPOUND_HEADS` also form `a_b` compounds.
const WORDS: &[&str] = &[
    "data", "value", "item", "count", "total", "index", "result", "key", "name", "size",
    "node", "left", "right", "start", "end", "line", "text", "word", "score", "level",
    "step", "point", "first", "last", "next", "prev", "max", "min", "new", "old",
    "acc", "account", "active", "addr", "address", "age", "alpha", "amount", "angle", "answer",
    "arg", "args", "area", "array", "attempt", "avg", "back", "balance", "bar", "base",
    "batch", "beta", "bit", "bits", "block", "body", "bonus", "book", "books", "bound",
    "box", "branch", "buf", "buffer", "bucket", "buckets", "byte", "cache", "call", "cap",
    "card", "cards", "cart", "cell", "cells", "center", "chain", "change", "char", "chars",
    "chunk", "chunks", "city", "claim", "code", "col", "cols", "color", "column", "counter",
    "cost", "cur", "current", "cursor", "dates", "day", "days", "debt", "degree", "delta",
    "depth", "diff", "digit", "digits", "dim", "dist", "doc", "docs", "done", "draft",
    "edge", "edges", "elem", "entry", "entries", "epoch", "err", "error", "errors", "event",
    "events", "extra", "factor", "field", "fields", "flag", "flags", "flow", "food", "foo",
    "form", "frame", "freq", "front", "gap", "gain", "gamma", "goal", "grade", "grades",
    "graph", "grid", "group", "groups", "guess", "half", "head", "height", "hit", "hits",
    "hold", "hour", "hours", "idx", "image", "inc", "info", "inner", "items", "job",
    "jobs", "keys", "kind", "label", "labels", "layer", "length", "limit", "lines", "link",
    "links", "load", "low", "high", "mark", "marks", "mask", "matrix", "mean", "memo",
    "mid", "mode", "month", "names", "need", "nodes", "note", "notes", "num", "nums",
    "number", "numbers", "offset", "order", "orders", "outer", "owner", "page", "pages", "pair",
    "pairs", "parent", "part", "parts", "path", "paths", "peak", "pivot", "pixel", "points",
    "pos", "power", "prefix", "price", "prices", "queue", "quota", "rank", "rate", "ratio",
    "raw", "reader", "rec", "record", "records", "ref", "rem", "res", "rest", "results",
    "root", "row", "rows", "rule", "rules", "run", "runs", "scale", "scores", "seed",
    "seen", "seg", "shift", "side", "sign", "slot", "slots", "span", "speed", "stack",
    "stage", "state", "stock", "store", "sub", "suffix", "tag", "tags", "tail", "target",
    "task", "tasks", "temp", "term", "terms", "tick", "tile", "tiles", "time", "tmp",
    "token", "tokens", "top", "track", "tree", "trial", "unit", "units", "user", "users",
    "val", "vals", "values", "vec", "view", "wait", "weight", "weights", "width", "words",
    "work", "year", "years", "zone", "apple", "banana", "cherry", "river", "stone", "cloud",
    "forest", "lamp", "bridge", "castle", "desert", "engine", "falcon", "garden", "harbor", "island",
    "jungle", "kettle", "ladder", "magnet", "needle", "orange", "pepper", "quartz", "rabbit", "saddle",
    "tunnel", "violet", "wagon", "yarn", "zebra", "anchor", "basket", "candle", "dragon", "ember",
    "feather", "glacier", "hammer", "iron", "jewel", "kite", "lemon", "marble", "nectar", "olive",
    "pebble", "quill", "ribbon", "silver", "timber", "velvet", "willow", "amber", "blossom", "canyon",
    "meadow", "summit", "valley", "breeze", "comet", "planet", "rocket", "orbit", "lunar", "solar",
    "acorn", "badge", "cabin", "dune", "fable", "gravel", "hollow", "ivory", "jolly", "karma",
    "lantern", "mango", "noble", "oasis", "piano", "radar", "salt", "thorn", "ultra", "vivid",
    "walnut", "yacht", "zest", "bolt", "crane", "drum", "flint", "grove", "honey", "inlet",
    "jade", "knot", "lily", "moss", "nest", "opal", "plum", "reef", "sage", "tide",
    "vine", "wren", "arrow", "bell", "coin", "dart", "echo", "fern", "glow", "hive",
    "alias", "bias", "blob", "cell_id", "clip", "copy", "core", "crumb", "dial", "dot",
    "draw", "duty", "edit", "fact", "fill", "fold", "font", "gate", "gear", "glue",
    "hint", "hook", "host", "icon", "jump", "kit", "lane", "leaf", "lens", "lock",
    "loop", "lot", "mesh", "mild", "mix", "nib", "pact", "pad", "pin", "pipe",
    "plot", "pool", "port", "pulse", "rack", "ray", "ring", "rod", "rope", "rung",
    "seal", "shell", "sink", "slab", "slice_", "snap", "sock", "spark", "spur", "stem",
    "tab", "tank", "tap", "tone", "tool", "trap", "tray", "tube", "twig", "vault",
    "verb", "wave", "wick", "wire", "yard", "zip_", "accum", "agg", "alt", "amt",
    "attr", "aux", "bnd", "cnt", "coef", "cond", "ctx", "cfg", "ctr", "dst",
    "elt", "exp", "fmt", "fn", "gen", "grp", "hdr", "img", "ins", "itm",
    "lbl", "lst", "msg", "nbr", "obj", "opt", "out", "pct", "ptr", "qty",
    "rdr", "req", "resp", "ret", "sel", "seq", "src", "stat", "stats", "str_",
    "tbl", "tgt", "tot", "tup", "usr", "var", "vert", "wgt", "win", "xs",
    "ys", "zs", "a", "b", "c", "d", "e", "f", "g", "h",
    "i", "j", "k", "l", "m", "n", "o", "p", "q", "r",
    "s", "t", "u", "v", "w", "x", "y", "z", "ab", "cd",
    "dx", "dy", "ix", "iy", "nx", "ny", "px", "py", "vx", "vy",
    "lo", "hi", "ok", "op", "io", "fp", "fd", "db", "ee", "uu",
    "accepted", "adjusted", "allowed", "applied", "average", "balanced", "blocked", "bucketed", "cached", "checked",
    "cleaned", "closed", "combined", "computed", "converted", "counted", "created", "decoded", "default", "deleted",
    "denied", "doubled", "dropped", "encoded", "expected", "failed", "filtered", "final", "fixed", "found",
    "grouped", "halved", "ignored", "initial", "joined", "kept", "latest", "loaded", "matched", "merged",
    "missing", "moved", "negative", "normal", "opened", "parsed", "passed", "pending", "positive", "present",
    "printed", "queued", "ranked", "ready", "removed", "renamed", "reported", "reversed_", "rounded", "saved",
    "scaled", "selected", "sent", "shifted", "skipped", "sorted_", "split", "squared", "stored", "summed",
    "tested", "trimmed", "updated", "used", "valid", "visited", "wrapped", "written", "zeroed", "pruned",
];

const COMPOUND_HEADS: usize = 30;

/// Small integers that appear as literals.
fn numbers() -> Vec<String> {
    let mut out: Vec<String> = (0..=100).map(|n| n.to_string()).collect();
    out.extend(["1000", "255", "256", "1024", "360", "365", "500"].map(String::from));
    out
}

fn both_forms(out: &mut Vec<String>, s: &str) {
    out.push(s.to_string());
    out.push(format!(" {s}"));
}

pub fn builtin_entries() -> Vec<String> {
    let mut out = Vec::new();
    for s in ["\n", "\n\n", "\n\n\n", "\t", "\t\t", "\t\t\t"] {
        out.push(s.to_string());
    }
    for n in 1..=SPACE_RUNS {
        out.push(" ".repeat(n));
    }
    for p in PUNCT {
        both_forms(&mut out, p);
    }
    for n in numbers() {
        both_forms(&mut out, &n);
    }
    for k in lexicon::KEYWORDS.iter().chain(lexicon::SOFT_KEYWORDS) {
        both_forms(&mut out, k);
    }
    for b in lexicon::BUILTINS.iter().chain(lexicon::RECEIVERS) {
        both_forms(&mut out, b);
    }
    for w in WORDS {
        both_forms(&mut out, w);
    }
    for a in &WORDS[..COMPOUND_HEADS] {
        for b in &WORDS[..COMPOUND_HEADS] {
            if a != b {
                both_forms(&mut out, &format!("{a}_{b}"));
            }
        }
    }
    out
}
