use dalat::latparse::Session;
use dalat::mtable::Column;
use dalat::protocol::{decode_all, serve, Decoder, Frame};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn awkward_doubles(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let special = [
        0.0,
        -0.0,
        f64::NAN,
        f64::INFINITY,
        f64::NEG_INFINITY,
        f64::MIN_POSITIVE,
        5e-324,
        f64::MAX,
        1.0 / 3.0,
    ];
    (0..n)
        .map(|i| {
            if i < special.len() {
                special[i]
            } else {
                f64::from_bits(rng.gen::<u64>())
            }
        })
        .collect()
}

fn sample_stream(rng: &mut ChaCha8Rng) -> Vec<Frame> {
    vec![
        Frame::Exec("twiss, sequence=ring;\nsend, twiss;".into()),
        Frame::Num(1.5),
        Frame::Num(-2.5e-300),
        Frame::Str("héllo\nwith newline and \"quotes\"".into()),
        Frame::Vec(awkward_doubles(rng, 40)),
        Frame::Vec(Vec::new()),
        Frame::Tbl(vec![
            ("name".into(), Column::Str(vec!["$start".into(), "".into(), "qf".into()])),
            ("s".into(), Column::Real(awkward_doubles(rng, 3))),
        ]),
        Frame::Tbl(Vec::new()),
        Frame::Err("bad thing".into()),
        Frame::Done,
    ]
}

fn encode(frames: &[Frame]) -> Vec<u8> {
    let mut out = Vec::new();
    for f in frames {
        f.encode(&mut out);
    }
    out
}

#[test]
fn whole_stream_round_trips() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let frames = sample_stream(&mut rng);
    assert_eq!(decode_all(&encode(&frames)).unwrap(), frames);
}

#[test]
fn random_chunking_decodes_identically() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let frames = sample_stream(&mut rng);
    let bytes = encode(&frames);
    for _ in 0..100_000 {
        let mut dec = Decoder::new();
        let mut got = Vec::new();
        let mut at = 0;
        while at < bytes.len() {
            // mostly small pieces, sometimes single bytes, sometimes big
            let n = match rng.gen_range(0..10) {
                0 => 1,
                1 => rng.gen_range(1..=bytes.len()),
                _ => rng.gen_range(1..=64),
            };
            let end = (at + n).min(bytes.len());
            dec.push(&bytes[at..end]);
            at = end;
            while let Some(f) = dec.next_frame() {
                got.push(f.unwrap());
            }
        }
        assert_eq!(dec.pending(), 0);
        assert_eq!(got, frames);
    }
}

#[test]
fn vec_payload_is_bit_exact() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let v = awkward_doubles(&mut rng, 1000);
    let got = decode_all(&Frame::Vec(v.clone()).to_bytes()).unwrap();
    let Frame::Vec(w) = &got[0] else { panic!() };
    let bits = |x: &[f64]| x.iter().map(|d| d.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(w), bits(&v));
}

#[test]
fn wire_format_literal() {
    assert_eq!(Frame::Num(1.5).to_bytes(), b"NUM 1.5\n");
    assert_eq!(Frame::Str("ab".into()).to_bytes(), b"STR 2\nab");
    assert_eq!(Frame::Done.to_bytes(), b"DONE\n");
    let mut want = b"VEC 1\n".to_vec();
    want.extend_from_slice(&2.0f64.to_le_bytes());
    assert_eq!(Frame::Vec(vec![2.0]).to_bytes(), want);
    let t = Frame::Tbl(vec![("n".into(), Column::Str(vec!["qf".into()]))]);
    let mut want = b"TBL 1 1\nCOL n str\n".to_vec();
    want.extend_from_slice(&2u32.to_le_bytes());
    want.extend_from_slice(b"qf");
    assert_eq!(t.to_bytes(), want);
}

#[test]
fn malformed_frames_are_skipped() {
    let mut bytes = b"BOGUS 12\n".to_vec();
    bytes.extend(Frame::Num(2.0).to_bytes());
    bytes.extend(b"NUM twelve\n");
    bytes.extend(Frame::Done.to_bytes());
    let mut d = Decoder::new();
    d.push(&bytes);
    assert!(d.next_frame().unwrap().is_err());
    assert_eq!(d.next_frame().unwrap().unwrap(), Frame::Num(2.0));
    assert!(d.next_frame().unwrap().is_err());
    assert_eq!(d.next_frame().unwrap().unwrap(), Frame::Done);
    assert!(d.next_frame().is_none());
}

fn fodo() -> String {
    let dir = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/lattice");
    format!("call, file=\"{dir}/01_fodo_defs.madx\"; call, file=\"{dir}/02_fodo_optics.madx\";")
}

#[test]
fn serve_answers_and_survives_garbage() {
    let mut input = Frame::Exec("x = 2; send, x*3;".into()).to_bytes();
    input.extend(b"GARBAGE\n");
    input.extend(Frame::Num(1.0).to_bytes());
    input.extend(Frame::Exec("frobnicate;".into()).to_bytes());
    input.extend(Frame::Exec("send, x;".into()).to_bytes());
    let mut out = Vec::new();
    let mut s = Session::new();
    serve(&mut s, &input[..], &mut out).unwrap();
    let got = decode_all(&out).unwrap();
    let tags: Vec<_> = got.iter().map(|f| f.tag()).collect();
    assert_eq!(tags, ["NUM", "DONE", "ERR", "ERR", "ERR", "NUM", "DONE"]);
    assert_eq!(got[0], Frame::Num(6.0));
    let Frame::Err(m) = &got[3] else { panic!() };
    assert!(m.contains("expected an EXEC request, got NUM"), "{m}");
    let Frame::Err(m) = &got[4] else { panic!() };
    assert!(m.contains("frobnicate"), "{m}");
    // session state persists across requests
    assert_eq!(got[5], Frame::Num(2.0));
}

#[test]
fn serve_reports_truncated_input() {
    let mut input = Frame::Exec("send, 1;".into()).to_bytes();
    input.extend(b"EXEC 100\nshort");
    let mut out = Vec::new();
    serve(&mut Session::new(), &input[..], &mut out).unwrap();
    let got = decode_all(&out).unwrap();
    assert_eq!(got.len(), 3);
    assert!(matches!(&got[2], Frame::Err(m) if m.contains("inside a frame")));
}

#[test]
fn optics_columns_then_table() {
    let script = format!("{}\ntwiss, sequence=ring;\nsend, twiss.s, twiss.beta11, twiss.beta22;\nsend, twiss;", fodo());
    let mut out = Vec::new();
    let mut s = Session::new();
    serve(&mut s, &Frame::Exec(script).to_bytes()[..], &mut out).unwrap();
    let got = decode_all(&out).unwrap();
    let tags: Vec<_> = got.iter().map(|f| f.tag()).collect();
    assert_eq!(tags, ["VEC", "VEC", "VEC", "TBL", "DONE"]);
    let tw = s.table("twiss").unwrap();
    assert_eq!(got[1], Frame::Vec(tw.real("beta11").unwrap()));
    let Frame::Tbl(cols) = &got[3] else { panic!() };
    assert_eq!(cols.len(), tw.ncols() + tw.columns().iter().filter(|c| matches!(c.1, Column::Complex(_))).count());
    let n = tw.nrows();
    assert!(cols.iter().all(|c| c.1.len() == n));
}
