//! C ABI over `ramsey-trees`.
//!
//! Level selections live behind an opaque [`RtLevelSelection`] handle.
//! Every function returns an [`RtStatus`]; on failure the message is kept
//! per thread and read with [`rt_last_error`]. Strings handed out by the
//! library are freed with [`rt_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use clap::Parser;
use ramsey_trees::cli::{run, Cli};
use ramsey_trees::gen;
use ramsey_trees::levelsel::LevelSelection;
use ramsey_trees::rational::{fmt_rat, parse_rat};
use ramsey_trees::search::SearchConfig;
use ramsey_trees::strong::{count_strong, Shape, VectorStrongWitness};
use ramsey_trees::tree::Node;
use ramsey_trees::Error;

/// Status codes; the nonzero values match the CLI exit codes where they overlap.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RtStatus {
    Ok = 0,
    VerificationFailed = 1,
    InvalidInput = 2,
    BudgetExceeded = 3,
    Undecidable = 4,
    NullPointer = 5,
    Panic = 6,
}

/// A level selection owned by the library.
pub struct RtLevelSelection(LevelSelection);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior NULs removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> RtStatus {
    match e.exit_code() {
        1 => RtStatus::VerificationFailed,
        3 => RtStatus::BudgetExceeded,
        4 => RtStatus::Undecidable,
        _ => RtStatus::InvalidInput,
    }
}

enum Fail {
    Null(&'static str),
    Lib(Error),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Lib(e)
    }
}

/// Runs `f`, translating errors and panics into a status and `rt_last_error`.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> RtStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => RtStatus::Ok,
        Ok(Err(Fail::Null(what))) => {
            set_error(&format!("null pointer: {what}"));
            RtStatus::NullPointer
        }
        Ok(Err(Fail::Lib(e))) => {
            set_error(&e.to_string());
            status_of(&e)
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(&format!("panic: {msg}"));
            RtStatus::Panic
        }
    }
}

unsafe fn text<'a>(p: *const c_char, what: &'static str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail::Lib(Error::Parse(format!("{what} is not UTF-8"))))
}

unsafe fn put_string(out: *mut *mut c_char, s: String) -> Result<(), Fail> {
    if out.is_null() {
        return Err(Fail::Null("out"));
    }
    let c = CString::new(s).map_err(|_| Fail::Lib(Error::Parse("string with interior NUL".into())))?;
    *out = c.into_raw();
    Ok(())
}

unsafe fn handle<'a>(h: *const RtLevelSelection) -> Result<&'a LevelSelection, Fail> {
    h.as_ref().map(|h| &h.0).ok_or(Fail::Null("selection"))
}

unsafe fn branchings(b: *const u32, d: usize) -> Result<Vec<u32>, Fail> {
    if b.is_null() {
        return Err(Fail::Null("branchings"));
    }
    Ok(std::slice::from_raw_parts(b, d).to_vec())
}

fn json(x: &impl serde::Serialize) -> Result<String, Fail> {
    serde_json::to_string(x).map_err(|e| Fail::Lib(e.into()))
}

/// The message of the last failure on this thread, or NULL. Valid until the
/// next failing call on the same thread.
#[no_mangle]
pub extern "C" fn rt_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Frees a string returned by this library. NULL is ignored.
///
/// # Safety
/// `s` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn rt_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Parses a level selection from its JSON form.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rt_level_selection_from_json(json: *const c_char, out: *mut *mut RtLevelSelection) -> RtStatus {
    guard(|| {
        if out.is_null() {
            return Err(Fail::Null("out"));
        }
        let d = LevelSelection::from_json(text(json, "json")?)?;
        *out = Box::into_raw(Box::new(RtLevelSelection(d)));
        Ok(())
    })
}

/// A seeded uniform level selection of relative density `density` (`"p/q"`),
/// or the pointer construction when `pointer` is nonzero.
///
/// # Safety
/// `b` must point to `d` branching numbers; `density` must be NUL-terminated
/// (it may be NULL when `pointer` is nonzero); `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rt_level_selection_generate(
    b: *const u32,
    d: usize,
    height: usize,
    b_w: u32,
    density: *const c_char,
    pointer: i32,
    seed: u64,
    out: *mut *mut RtLevelSelection,
) -> RtStatus {
    guard(|| {
        if out.is_null() {
            return Err(Fail::Null("out"));
        }
        let b = branchings(b, d)?;
        let sel = if pointer != 0 {
            gen::pointer_selection(&b, height, b_w, seed)?
        } else {
            gen::level_selection(&b, height, b_w, &parse_rat(text(density, "density")?)?, seed)?
        };
        *out = Box::into_raw(Box::new(RtLevelSelection(sel)));
        Ok(())
    })
}

/// Frees a handle. NULL is ignored.
///
/// # Safety
/// `h` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn rt_level_selection_free(h: *mut RtLevelSelection) {
    if !h.is_null() {
        drop(Box::from_raw(h));
    }
}

/// The JSON form of the selection.
///
/// # Safety
/// `h` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rt_level_selection_to_json(h: *const RtLevelSelection, out: *mut *mut c_char) -> RtStatus {
    guard(|| put_string(out, json(&handle(h)?.to_json())?))
}

/// `δ(D)` as `"p/q"`.
///
/// # Safety
/// `h` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rt_level_selection_density(h: *const RtLevelSelection, out: *mut *mut c_char) -> RtStatus {
    guard(|| put_string(out, fmt_rat(&handle(h)?.density_of())))
}

/// Whether `(F, w)` is strongly `θ`-correlated. `f_json` holds the node sets
/// `[[[digits],…],…]` of `F`; `w` is a node such as `"01"`.
///
/// # Safety
/// `h` must be a live handle; the strings must be NUL-terminated; `result`
/// must be writable.
#[no_mangle]
pub unsafe extern "C" fn rt_check_correlated(
    h: *const RtLevelSelection,
    f_json: *const c_char,
    w: *const c_char,
    theta: *const c_char,
    result: *mut i32,
) -> RtStatus {
    guard(|| {
        if result.is_null() {
            return Err(Fail::Null("result"));
        }
        let d = handle(h)?;
        let sets: Vec<Vec<Node>> = serde_json::from_str(text(f_json, "f_json")?).map_err(Error::from)?;
        let f = VectorStrongWitness::from_node_sets(d.index(), &sets)?;
        let w = Node::parse(text(w, "w")?)?;
        let cert = d.is_strongly_correlated(&f, &w, &parse_rat(text(theta, "theta")?)?)?;
        *result = cert.holds as i32;
        Ok(())
    })
}

/// The first strongly `θ`-correlated pair as JSON, or the string `null`.
///
/// # Safety
/// `h` must be a live handle; `theta` must be NUL-terminated; `out` must be
/// writable.
#[no_mangle]
pub unsafe extern "C" fn rt_find_correlated(
    h: *const RtLevelSelection,
    theta: *const c_char,
    budget: u64,
    out: *mut *mut c_char,
) -> RtStatus {
    guard(|| {
        let d = handle(h)?;
        let pair = d.find_strongly_correlated(&parse_rat(text(theta, "theta")?)?, &SearchConfig::with_budget(budget))?;
        put_string(out, json(&pair.map(|p| p.to_json(d.index())))?)
    })
}

/// `|Strong_k|` of the full vector tree, as a decimal string.
///
/// # Safety
/// `b` must point to `d` branching numbers; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rt_count_strong(b: *const u32, d: usize, height: usize, k: usize, out: *mut *mut c_char) -> RtStatus {
    guard(|| {
        let shape = Shape::new(branchings(b, d)?, height);
        put_string(out, count_strong(&shape, k, None)?.to_string())
    })
}

/// Runs one command line (without the program name) and returns its JSON
/// document. `exit_code` receives the code the binary would exit with.
///
/// # Safety
/// `argv` must point to `argc` NUL-terminated strings; `out` and `exit_code`
/// must be writable.
#[no_mangle]
pub unsafe extern "C" fn rt_run(
    argv: *const *const c_char,
    argc: usize,
    out: *mut *mut c_char,
    exit_code: *mut i32,
) -> RtStatus {
    guard(|| {
        if exit_code.is_null() {
            return Err(Fail::Null("exit_code"));
        }
        if argv.is_null() && argc > 0 {
            return Err(Fail::Null("argv"));
        }
        let mut args = vec!["ramsey-trees".to_string()];
        for i in 0..argc {
            args.push(text(*argv.add(i), "argv entry")?.to_string());
        }
        let cli = Cli::try_parse_from(&args).map_err(|e| Error::Parse(e.to_string()))?;
        let (doc, code) = match run(&cli) {
            Ok(o) => (o.json, o.code),
            Err(e) => (serde_json::json!({ "error": e.to_string() }), e.exit_code()),
        };
        *exit_code = code;
        put_string(out, doc.to_string())
    })
}
