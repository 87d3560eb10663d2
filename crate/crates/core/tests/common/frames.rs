//! Random protocol frames.

use gridcure::bus::frame::MAX_WORDS;
use gridcure::bus::{Request, Response, Status};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn random_request(rng: &mut ChaCha8Rng) -> Request {
    let count = rng.random_range(1..=MAX_WORDS);
    if rng.random_bool(0.5) {
        Request::read(rng.random(), rng.random(), rng.random(), count)
    } else {
        let payload = (0..count).map(|_| rng.random()).collect();
        Request::write(rng.random(), rng.random(), rng.random(), payload)
    }
}

pub fn random_response(rng: &mut ChaCha8Rng) -> Response {
    let status = [Status::Ok, Status::AccessDenied, Status::UnknownRegister, Status::Malformed, Status::UnknownAsset]
        [rng.random_range(0..5)];
    let n = rng.random_range(0..=MAX_WORDS);
    Response {
        tid: rng.random(),
        asset: rng.random(),
        status,
        words: (0..n).map(|_| rng.random()).collect(),
    }
}

