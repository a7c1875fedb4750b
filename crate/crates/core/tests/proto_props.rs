mod common;

use braillemux::proto::{decode_frame, encode_packet, FrameBuffer, HEADER_LEN, MAX_FRAME_LEN};
use common::arb_packet;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn round_trip(p in arb_packet()) {
        let frame = encode_packet(&p).unwrap();
        prop_assert_eq!(decode_frame(&frame).unwrap(), Some((p, frame.len())));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1_000))]

    #[test]
    fn header_matches_payload(p in arb_packet()) {
        let frame = encode_packet(&p).unwrap();
        let len = u32::from_be_bytes(frame[..4].try_into().unwrap()) as usize;
        let ty = u32::from_be_bytes(frame[4..8].try_into().unwrap());
        prop_assert_eq!(len + HEADER_LEN, frame.len());
        prop_assert_eq!(ty, p.type_code());
    }

    #[test]
    fn prefixes_need_more_data(p in arb_packet()) {
        let frame = encode_packet(&p).unwrap();
        for cut in 0..frame.len() {
            prop_assert_eq!(decode_frame(&frame[..cut]).unwrap(), None);
        }
    }

    #[test]
    fn stream_of_frames(
        ps in prop::collection::vec(arb_packet(), 1..12),
        chunk in 1usize..64,
    ) {
        let bytes: Vec<u8> = ps.iter().flat_map(|p| encode_packet(p).unwrap()).collect();
        let mut fb = FrameBuffer::new();
        let mut got = Vec::new();
        for piece in bytes.chunks(chunk) {
            fb.extend(piece);
            while let Some(p) = fb.next_packet().unwrap() {
                got.push(p);
            }
        }
        prop_assert_eq!(got, ps);
        prop_assert_eq!(fb.buffered(), 0);
    }
}

#[test]
fn random_bytes_never_panic() {
    let mut rng = rand::rngs::StdRng::seed_from_u64(0x6272_6c6d_7578);
    for _ in 0..100_000 {
        let len = rng.gen_range(0..96);
        let mut bytes: Vec<u8> = (0..len).map(|_| rng.gen()).collect();
        // keep many headers plausible so payload decoders get exercised
        if len >= HEADER_LEN && rng.gen_bool(0.75) {
            let body = (len - HEADER_LEN) as u32;
            bytes[..4].copy_from_slice(&body.to_be_bytes());
            let ty = *[
                0x01u32, 0x02, 0x03, 0x04, 0x06, 0x11, 0x13, 0x20, 0x23, 0x24, 0x25, 0x30, 0x32,
                0x40, 0x7F,
            ]
            .get(rng.gen_range(0..15))
            .unwrap();
            bytes[4..8].copy_from_slice(&ty.to_be_bytes());
        }
        if let Ok(Some((p, used))) = decode_frame(&bytes) {
            assert!(used <= bytes.len());
            assert_eq!(encode_packet(&p).unwrap(), bytes[..used]);
        }
        let mut fb = FrameBuffer::new();
        fb.extend(&bytes);
        for _ in 0..4 {
            if !matches!(fb.next_packet(), Ok(Some(_))) {
                break;
            }
        }
    }
}

#[test]
fn oversized_header_rejected_without_payload() {
    let mut frame = ((MAX_FRAME_LEN + 1) as u32).to_be_bytes().to_vec();
    frame.extend_from_slice(&0x23u32.to_be_bytes());
    let err = decode_frame(&frame).unwrap_err();
    assert_eq!(err.frame_len, None);
}
