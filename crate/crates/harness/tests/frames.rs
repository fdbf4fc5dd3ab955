//! Round-trip properties of the wire frames and the JSONL store.

use guirl::store::{read_jsonl, write_jsonl};
use guirl::wire::{ClientFrame, ErrorFrame, ErrorKind, RequestFrame, ServerFrame};
use guirl_core::prompt::{PolicyRequest, Sampling};
use proptest::prelude::*;

fn text() -> impl Strategy<Value = String> {
    prop_oneof![any::<String>(), "[a-z<>/{}\"\\\\\n ]{0,40}".prop_map(String::from)]
}

fn request() -> impl Strategy<Value = RequestFrame> {
    (
        text(),
        text(),
        prop::collection::vec(text(), 0..5),
        prop::collection::vec("[A-Za-z0-9+/=]{0,64}", 0..4),
        0.0f64..2.0,
        1u32..4096,
    )
        .prop_map(|(id, instruction, history, images, temperature, max_tokens)| RequestFrame {
            request_id: id,
            request: PolicyRequest::new(&instruction, history, images, Sampling { temperature, max_tokens }),
        })
}

fn kind() -> impl Strategy<Value = ErrorKind> {
    prop_oneof![
        Just(ErrorKind::UnsupportedVersion),
        Just(ErrorKind::BadRequest),
        Just(ErrorKind::BackendTimeout),
        Just(ErrorKind::BackendError),
        Just(ErrorKind::Overloaded),
    ]
}

proptest! {
    #[test]
    fn client_frames_round_trip_on_one_line(frame in request()) {
        let f = ClientFrame::Request(frame);
        let line = serde_json::to_string(&f).unwrap();
        prop_assert!(!line.contains('\n'));
        prop_assert_eq!(serde_json::from_str::<ClientFrame>(&line).unwrap(), f);
    }

    #[test]
    fn server_frames_round_trip(id in text(), body in text(), k in kind(), with_id in any::<bool>()) {
        for f in [
            ServerFrame::Response { request_id: id.clone(), text: body.clone() },
            ServerFrame::Error(ErrorFrame { request_id: with_id.then(|| id.clone()), kind: k, message: body.clone() }),
        ] {
            let line = serde_json::to_string(&f).unwrap();
            prop_assert!(!line.contains('\n'));
            prop_assert_eq!(serde_json::from_str::<ServerFrame>(&line).unwrap(), f);
        }
    }

    #[test]
    fn jsonl_round_trip(frames in prop::collection::vec(request(), 0..8)) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("frames.jsonl");
        write_jsonl(&path, &frames).unwrap();
        prop_assert_eq!(read_jsonl::<RequestFrame>(&path).unwrap(), frames);
    }
}
