//! Carry-less polynomial arithmetic over GF(2).
//!
//! Polynomials are little-endian `u64` words: coefficient `k` is bit `k % 64`
//! of word `k / 64`. Full products use Karatsuba; Toeplitz hashing only
//! needs the middle of a product and uses the transposed Karatsuba
//! recursion for it. Both bottom out in a kernel that sums 128-bit
//! carry-less products along diagonals, using VPCLMULQDQ, PCLMULQDQ or a
//! portable integer-multiply fallback depending on the CPU.

const KARATSUBA_THRESHOLD: usize = 32;
const MIDDLE_THRESHOLD: usize = 48;
/// Largest operand handled by one kernel call.
const BASE_MAX: usize = 64;
const PAD_BUF: usize = 4 * BASE_MAX + 32;

/// 32×32 → 64 carry-less multiply with integer multiplies; bits are spaced
/// four apart so column sums never carry into a neighbour.
fn bmul32(x: u32, y: u32) -> u64 {
    const M: [u32; 4] = [0x1111_1111, 0x2222_2222, 0x4444_4444, 0x8888_8888];
    const W: [u64; 4] = [
        0x1111_1111_1111_1111,
        0x2222_2222_2222_2222,
        0x4444_4444_4444_4444,
        0x8888_8888_8888_8888,
    ];
    let xs = M.map(|m| (x & m) as u64);
    let ys = M.map(|m| (y & m) as u64);
    let mut r = 0;
    for (k, w) in W.iter().enumerate() {
        let mut z = 0u64;
        for i in 0..4 {
            z ^= xs[i].wrapping_mul(ys[(k + 4 - i) % 4]);
        }
        r |= z & w;
    }
    r
}

pub(crate) fn clmul64_portable(a: u64, b: u64) -> u128 {
    let (a0, a1) = (a as u32, (a >> 32) as u32);
    let (b0, b1) = (b as u32, (b >> 32) as u32);
    let lo = bmul32(a0, b0) as u128;
    let hi = bmul32(a1, b1) as u128;
    let mid = bmul32(a0 ^ a1, b0 ^ b1) as u128 ^ lo ^ hi;
    lo ^ (mid << 32) ^ (hi << 64)
}

/// Folds 128-bit diagonal sums into words: `out[w] ^= lo(acc[w]) ^ hi(acc[w-1])`.
struct Folder<'a> {
    out: &'a mut [u64],
    next: usize,
    carry: u64,
}

impl<'a> Folder<'a> {
    fn new(out: &'a mut [u64]) -> Self {
        Folder { out, next: 0, carry: 0 }
    }

    #[inline(always)]
    fn push(&mut self, acc: u128) {
        self.out[self.next] ^= acc as u64 ^ self.carry;
        self.carry = (acc >> 64) as u64;
        self.next += 1;
    }

    fn finish(self) {
        self.out[self.next] ^= self.carry;
    }
}

/// Diagonal sums `acc[k] = Σ_v ap[s + k - v]·b[v]` for `k < t`, folded into
/// `out[0..=t]`. Callers guarantee `s + 1 >= b.len()` and
/// `ap.len() >= s + t.next_multiple_of(16)`.
trait Kernel {
    fn diag(ap: &[u64], s: usize, b: &[u64], t: usize, out: &mut [u64]);
}

struct Portable;

impl Kernel for Portable {
    fn diag(ap: &[u64], s: usize, b: &[u64], t: usize, out: &mut [u64]) {
        let mut f = Folder::new(out);
        for k in 0..t {
            let mut acc = 0u128;
            for (v, &bv) in b.iter().enumerate() {
                acc ^= clmul64_portable(ap[s + k - v], bv);
            }
            f.push(acc);
        }
        f.finish();
    }
}

#[cfg(target_arch = "x86_64")]
mod x86 {
    use super::{Folder, Kernel};
    use std::arch::x86_64::*;

    pub(super) struct Pclmul;
    pub(super) struct Vpclmul;

    #[target_feature(enable = "pclmulqdq,sse2")]
    unsafe fn diag_pclmul(ap: &[u64], s: usize, b: &[u64], t: usize, out: &mut [u64]) {
        assert!(ap.len() >= s + t.next_multiple_of(16) && s + 1 >= b.len());
        let mut f = Folder::new(out);
        let p = ap.as_ptr();
        let mut k0 = 0;
        while k0 < t {
            let mut c = [_mm_setzero_si128(); 4];
            for (v, &bv) in b.iter().enumerate() {
                let bb = _mm_set_epi64x(0, bv as i64);
                let x = p.add(s + k0 - v);
                for (j, cj) in c.iter_mut().enumerate() {
                    let a = _mm_loadl_epi64(x.add(j) as *const __m128i);
                    *cj = _mm_xor_si128(*cj, _mm_clmulepi64_si128::<0x00>(a, bb));
                }
            }
            for cj in c.iter().take(t - k0) {
                let mut lanes = [0u128; 1];
                _mm_storeu_si128(lanes.as_mut_ptr() as *mut __m128i, *cj);
                f.push(lanes[0]);
            }
            k0 += 4;
        }
        f.finish();
    }

    #[target_feature(enable = "avx512f,vpclmulqdq")]
    unsafe fn diag_vpclmul(ap: &[u64], s: usize, b: &[u64], t: usize, out: &mut [u64]) {
        assert!(ap.len() >= s + t.next_multiple_of(16) && s + 1 >= b.len());
        let mut f = Folder::new(out);
        let p = ap.as_ptr();
        let mut k0 = 0;
        while k0 < t {
            // even/odd output positions of two 8-word windows
            let mut e0 = _mm512_setzero_si512();
            let mut o0 = _mm512_setzero_si512();
            let mut e1 = _mm512_setzero_si512();
            let mut o1 = _mm512_setzero_si512();
            for (v, &bv) in b.iter().enumerate() {
                let bb = _mm512_set1_epi64(bv as i64);
                let x = p.add(s + k0 - v);
                let w0 = _mm512_loadu_si512(x as *const __m512i);
                let w1 = _mm512_loadu_si512(x.add(8) as *const __m512i);
                e0 = _mm512_xor_si512(e0, _mm512_clmulepi64_epi128::<0x00>(w0, bb));
                o0 = _mm512_xor_si512(o0, _mm512_clmulepi64_epi128::<0x01>(w0, bb));
                e1 = _mm512_xor_si512(e1, _mm512_clmulepi64_epi128::<0x00>(w1, bb));
                o1 = _mm512_xor_si512(o1, _mm512_clmulepi64_epi128::<0x01>(w1, bb));
            }
            let mut lanes = [[0u128; 4]; 4];
            for (dst, src) in lanes.iter_mut().zip([e0, o0, e1, o1]) {
                _mm512_storeu_si512(dst.as_mut_ptr() as *mut __m512i, src);
            }
            let n = (t - k0).min(16);
            for i in 0..n {
                let (half, j) = (i / 8, i % 8);
                f.push(lanes[2 * half + j % 2][j / 2]);
            }
            k0 += 16;
        }
        f.finish();
    }

    impl Kernel for Pclmul {
        fn diag(ap: &[u64], s: usize, b: &[u64], t: usize, out: &mut [u64]) {
            // SAFETY: only instantiated after runtime feature detection.
            unsafe { diag_pclmul(ap, s, b, t, out) }
        }
    }

    impl Kernel for Vpclmul {
        fn diag(ap: &[u64], s: usize, b: &[u64], t: usize, out: &mut [u64]) {
            // SAFETY: only instantiated after runtime feature detection.
            unsafe { diag_vpclmul(ap, s, b, t, out) }
        }
    }

    pub(super) fn has_pclmul() -> bool {
        is_x86_feature_detected!("pclmulqdq") && is_x86_feature_detected!("sse2")
    }

    pub(super) fn has_vpclmul() -> bool {
        is_x86_feature_detected!("avx512f") && is_x86_feature_detected!("vpclmulqdq")
    }
}

/// Name of the carry-less multiply in use: `vpclmulqdq`, `pclmulqdq` or
/// `portable`.
pub fn clmul_kernel() -> &'static str {
    #[cfg(target_arch = "x86_64")]
    {
        if x86::has_vpclmul() {
            return "vpclmulqdq";
        }
        if x86::has_pclmul() {
            return "pclmulqdq";
        }
    }
    "portable"
}

/// Whether a hardware carry-less multiply is used.
pub fn hardware_clmul() -> bool {
    clmul_kernel() != "portable"
}

/// `out ^= a·b` for operands of at most `BASE_MAX` words.
fn base_mul<K: Kernel>(a: &[u64], b: &[u64], out: &mut [u64]) {
    let (na, nb) = (a.len(), b.len());
    debug_assert!(na <= BASE_MAX && nb <= BASE_MAX && nb >= 1);
    let mut ap = [0u64; PAD_BUF];
    ap[nb - 1..nb - 1 + na].copy_from_slice(a);
    K::diag(&ap, nb - 1, b, na + nb - 1, &mut out[..na + nb]);
}

/// `out[0..n) = words [n, 2n)` of `a·b` with `a.len() == 2n`, `b.len() == n`,
/// `n <= BASE_MAX`.
fn base_middle<K: Kernel>(a: &[u64], b: &[u64], out: &mut [u64]) {
    let n = b.len();
    let mut ap = [0u64; PAD_BUF];
    ap[..2 * n].copy_from_slice(a);
    let mut w = [0u64; BASE_MAX + 2];
    K::diag(&ap, n - 1, b, n + 1, &mut w[..n + 2]);
    out.copy_from_slice(&w[1..n + 1]);
}

/// `out ^= a·b` for any lengths, chunking operands to the kernel size.
fn schoolbook<K: Kernel>(a: &[u64], b: &[u64], out: &mut [u64]) {
    for (i, ac) in a.chunks(BASE_MAX).enumerate() {
        for (j, bc) in b.chunks(BASE_MAX).enumerate() {
            let off = (i + j) * BASE_MAX;
            base_mul::<K>(ac, bc, &mut out[off..]);
        }
    }
}

/// `out = a·b` for equal-length operands; `out.len() == 2n`.
fn karatsuba<K: Kernel>(a: &[u64], b: &[u64], out: &mut [u64], scratch: &mut [u64]) {
    let n = a.len();
    debug_assert_eq!(b.len(), n);
    debug_assert_eq!(out.len(), 2 * n);
    out.fill(0);
    if n <= KARATSUBA_THRESHOLD {
        base_mul::<K>(a, b, out);
        return;
    }
    let h = n / 2;
    let t = n - h;
    let (a0, a1) = a.split_at(h);
    let (b0, b1) = b.split_at(h);
    {
        let (lo, hi) = out.split_at_mut(2 * h);
        karatsuba::<K>(a0, b0, lo, scratch);
        karatsuba::<K>(a1, b1, hi, scratch);
    }
    let (sa, rest) = scratch.split_at_mut(t);
    let (sb, rest) = rest.split_at_mut(t);
    let (mid, rest) = rest.split_at_mut(2 * t);
    sa.copy_from_slice(a1);
    sb.copy_from_slice(b1);
    for i in 0..h {
        sa[i] ^= a0[i];
        sb[i] ^= b0[i];
    }
    karatsuba::<K>(sa, sb, mid, rest);
    for i in 0..2 * h {
        mid[i] ^= out[i];
    }
    for i in 0..2 * t {
        mid[i] ^= out[2 * h + i];
    }
    for i in 0..2 * t {
        out[h + i] ^= mid[i];
    }
}

/// `out = words [n, 2n)` of `a·b` with `a.len() == 2n`, `b.len() == n`.
///
/// With `b = b0 + b1·z^h` and `aᵢⱼ` the `2h`-word window of `a` starting at
/// block `i`: the low half is `M(a₁, b0⊕b1) ⊕ M(a₀⊕a₁, b1)` and the high half
/// is `M(a₁, b0⊕b1) ⊕ M(a₁⊕a₂, b0)`.
fn middle<K: Kernel>(a: &[u64], b: &[u64], out: &mut [u64], scratch: &mut [u64]) {
    let n = b.len();
    debug_assert_eq!(a.len(), 2 * n);
    debug_assert_eq!(out.len(), n);
    if n <= MIDDLE_THRESHOLD {
        base_middle::<K>(a, b, out);
        return;
    }
    if n % 2 == 1 {
        // shift b up one word and pad a; the wanted words move up by one
        let m = n + 1;
        let (a2, rest) = scratch.split_at_mut(2 * m);
        let (b2, rest) = rest.split_at_mut(m);
        let (o2, rest) = rest.split_at_mut(m);
        a2[..2 * n].copy_from_slice(a);
        a2[2 * n..].fill(0);
        b2[0] = 0;
        b2[1..].copy_from_slice(b);
        middle::<K>(a2, b2, o2, rest);
        out.copy_from_slice(&o2[..n]);
        return;
    }
    let h = n / 2;
    let (b0, b1) = b.split_at(h);
    let (sb, rest) = scratch.split_at_mut(h);
    let (sa, rest) = rest.split_at_mut(2 * h);
    let (p, rest) = rest.split_at_mut(h);
    let (q, rest) = rest.split_at_mut(h);
    for i in 0..h {
        sb[i] = b0[i] ^ b1[i];
    }
    middle::<K>(&a[h..3 * h], sb, p, rest);
    for i in 0..2 * h {
        sa[i] = a[i] ^ a[h + i];
    }
    middle::<K>(sa, b1, q, rest);
    for i in 0..h {
        out[i] = p[i] ^ q[i];
    }
    for i in 0..2 * h {
        sa[i] = a[h + i] ^ a[2 * h + i];
    }
    middle::<K>(sa, b0, q, rest);
    for i in 0..h {
        out[h + i] = p[i] ^ q[i];
    }
}

fn levels(n: usize) -> usize {
    (usize::BITS - n.leading_zeros()) as usize + 1
}

fn mul_with<K: Kernel>(a: &[u64], b: &[u64]) -> Vec<u64> {
    let (long, short) = if a.len() >= b.len() { (a, b) } else { (b, a) };
    let mut out = vec![0u64; a.len() + b.len()];
    let m = short.len();
    if m == 0 {
        return out;
    }
    if m <= KARATSUBA_THRESHOLD {
        schoolbook::<K>(long, short, &mut out);
        return out;
    }
    let mut scratch = vec![0u64; 4 * m + 8 * levels(m)];
    let mut prod = vec![0u64; 2 * m];
    let mut padded = vec![0u64; m];
    for (c, chunk) in long.chunks(m).enumerate() {
        let lhs = if chunk.len() == m {
            chunk
        } else {
            padded.fill(0);
            padded[..chunk.len()].copy_from_slice(chunk);
            &padded[..]
        };
        karatsuba::<K>(lhs, short, &mut prod, &mut scratch);
        let off = c * m;
        let end = (off + 2 * m).min(out.len());
        for (o, p) in out[off..end].iter_mut().zip(&prod) {
            *o ^= p;
        }
    }
    out
}

fn middle_with<K: Kernel>(a: &[u64], b: &[u64]) -> Vec<u64> {
    let n = b.len();
    let mut out = vec![0u64; n];
    let mut scratch = vec![0u64; 16 * n + 16 * levels(n)];
    middle::<K>(a, b, &mut out, &mut scratch);
    out
}

/// Full product `a·b`, `a.len() + b.len()` words.
pub fn poly_mul(a: &[u64], b: &[u64]) -> Vec<u64> {
    #[cfg(target_arch = "x86_64")]
    {
        if x86::has_vpclmul() {
            return mul_with::<x86::Vpclmul>(a, b);
        }
        if x86::has_pclmul() {
            return mul_with::<x86::Pclmul>(a, b);
        }
    }
    mul_with::<Portable>(a, b)
}

/// Words `[n, 2n)` of `a·b` where `a` has `2n` words and `b` has `n`.
pub fn poly_middle(a: &[u64], b: &[u64]) -> Vec<u64> {
    assert_eq!(a.len(), 2 * b.len(), "middle product needs a 2n-word operand");
    if b.is_empty() {
        return Vec::new();
    }
    #[cfg(target_arch = "x86_64")]
    {
        if x86::has_vpclmul() {
            return middle_with::<x86::Vpclmul>(a, b);
        }
        if x86::has_pclmul() {
            return middle_with::<x86::Pclmul>(a, b);
        }
    }
    middle_with::<Portable>(a, b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::RngCore;

    fn clmul_bitwise(a: u64, b: u64) -> u128 {
        (0..64)
            .filter(|i| (b >> i) & 1 == 1)
            .fold(0u128, |acc, i| acc ^ ((a as u128) << i))
    }

    fn mul_bitwise(a: &[u64], b: &[u64]) -> Vec<u64> {
        let mut out = vec![0u64; a.len() + b.len()];
        for i in 0..a.len() * 64 {
            if (a[i / 64] >> (i % 64)) & 1 == 0 {
                continue;
            }
            for j in 0..b.len() * 64 {
                if (b[j / 64] >> (j % 64)) & 1 == 1 {
                    out[(i + j) / 64] ^= 1 << ((i + j) % 64);
                }
            }
        }
        out
    }

    fn words(rng: &mut crate::SimRng, n: usize) -> Vec<u64> {
        (0..n).map(|_| rng.next_u64()).collect()
    }

    #[test]
    fn word_multiply_edge_cases() {
        for (a, b) in [(0, 7), (1, u64::MAX), (u64::MAX, u64::MAX), (3, 3), (1 << 63, 1 << 63)] {
            assert_eq!(clmul64_portable(a, b), clmul_bitwise(a, b), "{a:x} {b:x}");
        }
        assert_eq!(clmul64_portable(3, 3), 5);
    }

    #[test]
    fn products_match_bitwise_reference() {
        let mut rng = crate::sim_rng(5, 0);
        for (la, lb) in [(1, 1), (25, 25), (30, 70), (97, 50), (64, 64), (200, 3), (65, 1)] {
            let a = words(&mut rng, la);
            let b = words(&mut rng, lb);
            let expect = mul_bitwise(&a, &b);
            assert_eq!(mul_with::<Portable>(&a, &b), expect, "{la}x{lb}");
            assert_eq!(poly_mul(&a, &b), expect, "{la}x{lb}");
        }
        assert!(poly_mul(&[], &[1, 2]).iter().all(|&w| w == 0));
    }

    #[test]
    fn middle_product_is_a_slice_of_the_full_product() {
        let mut rng = crate::sim_rng(6, 0);
        for n in [1, 2, 7, 48, 49, 50, 97, 130, 301] {
            let a = words(&mut rng, 2 * n);
            let b = words(&mut rng, n);
            let full = poly_mul(&a, &b);
            assert_eq!(poly_middle(&a, &b), full[n..2 * n].to_vec(), "n = {n}");
            assert_eq!(middle_with::<Portable>(&a, &b), full[n..2 * n].to_vec(), "n = {n}");
        }
    }

    #[cfg(target_arch = "x86_64")]
    #[test]
    fn every_available_kernel_agrees() {
        let mut rng = crate::sim_rng(7, 0);
        for (la, lb) in [(3, 5), (40, 40), (64, 17), (150, 90)] {
            let a = words(&mut rng, la);
            let b = words(&mut rng, lb);
            let expect = mul_with::<Portable>(&a, &b);
            if x86::has_pclmul() {
                assert_eq!(mul_with::<x86::Pclmul>(&a, &b), expect);
            }
            if x86::has_vpclmul() {
                assert_eq!(mul_with::<x86::Vpclmul>(&a, &b), expect);
            }
        }
        for n in [5, 60, 200] {
            let a = words(&mut rng, 2 * n);
            let b = words(&mut rng, n);
            let expect = middle_with::<Portable>(&a, &b);
            if x86::has_pclmul() {
                assert_eq!(middle_with::<x86::Pclmul>(&a, &b), expect);
            }
            if x86::has_vpclmul() {
                assert_eq!(middle_with::<x86::Vpclmul>(&a, &b), expect);
            }
        }
    }

    proptest! {
        #[test]
        fn clmul_matches_bitwise(a in any::<u64>(), b in any::<u64>()) {
            prop_assert_eq!(clmul64_portable(a, b), clmul_bitwise(a, b));
        }

        #[test]
        fn hardware_and_portable_agree(a in proptest::collection::vec(any::<u64>(), 1..120),
                                       b in proptest::collection::vec(any::<u64>(), 1..120)) {
            prop_assert_eq!(poly_mul(&a, &b), mul_with::<Portable>(&a, &b));
        }
    }
}
