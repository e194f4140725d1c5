//! Keystream cipher for the digital bitstream.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::entropy::Bitstream;

/// ChaCha20 keystream under a 256-bit key, with the nonce selecting the stream.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct KeystreamCipher {
    key: [u8; 32],
    nonce: u64,
}

impl KeystreamCipher {
    pub fn new(key: [u8; 32], nonce: u64) -> Self {
        KeystreamCipher { key, nonce }
    }

    /// The same nonce under the bitwise complement of the key.
    pub fn wrong_key(&self) -> Self {
        KeystreamCipher {
            key: self.key.map(|b| !b),
            nonce: self.nonce,
        }
    }

    pub fn keystream(&self, len: usize) -> Vec<u8> {
        let mut rng = ChaCha20Rng::from_seed(self.key);
        rng.set_stream(self.nonce);
        let mut out = vec![0u8; len];
        rng.fill_bytes(&mut out);
        out
    }

    /// XORs `data` with the keystream; applying it twice restores the input.
    pub fn apply(&self, data: &mut [u8]) {
        let ks = self.keystream(data.len());
        for (d, k) in data.iter_mut().zip(ks) {
            *d ^= k;
        }
    }
}

/// Encrypts the payload and sets the header flag.
pub fn encrypt_bits(stream: &Bitstream, cipher: &KeystreamCipher) -> Bitstream {
    let mut out = stream.clone();
    cipher.apply(&mut out.payload);
    out.encrypted = true;
    out
}

/// Removes the keystream and clears the flag; a wrong key yields a garbage payload.
pub fn decrypt_bits(stream: &Bitstream, cipher: &KeystreamCipher) -> Bitstream {
    let mut out = stream.clone();
    cipher.apply(&mut out.payload);
    out.encrypted = false;
    out
}
