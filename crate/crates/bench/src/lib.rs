// SPDX-License-Identifier: Apache-2.0

//! Benchmark host crate; the benchmarks live in `benches/`.
