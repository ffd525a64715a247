#pragma once

#include "protoem/common.hpp"

namespace protoem::testing {

// Hand-counted co-occurrence matrix for data/fixture/tiny_corpus.jsonl.
//
// Pair universe (14 ordered pairs over event mentions):
//   fix1: (a,b) Before+Cause; (b,c) Contains+Subevent; (b,a),(a,c),(c,a),(c,b) all-None
//   fix2: (d,e),(e,d) Coref; (d,f) Before; (f,d),(e,f),(f,e) all-None
//   fix3: (g,h) Overlap+Precondition; (h,g) all-None
// Label supports: None(coref)=12, Coref=2, None(temporal)=10, Before=2,
// Overlap=1, Contains=1, None(causal)=12, Precondition=1, Cause=1,
// None(subevent)=13, Subevent=1; Simultaneous/Ends-on/Begins-on unsupported.
inline Mat fixture_expected_a_raw() {
  Mat a = Mat::Zero(14, 14);
  auto row = [&](int i, std::initializer_list<double> vals) {
    int j = 0;
    for (double v : vals) a(i, j++) = v;
  };
  // cols: 0 None(coref) 1 Coref 2 None(temp) 3 Before 4 Overlap 5 Contains
  //       6 Simult 7 Ends-on 8 Begins-on 9 None(causal) 10 Precond 11 Cause
  //       12 None(subev) 13 Subevent
  row(0, {1.0, 0.0, 8.0 / 12, 2.0 / 12, 1.0 / 12, 1.0 / 12, 0, 0, 0, 10.0 / 12, 1.0 / 12,
          1.0 / 12, 11.0 / 12, 1.0 / 12});
  row(1, {0.0, 1.0, 1.0, 0, 0, 0, 0, 0, 0, 1.0, 0, 0, 1.0, 0});
  row(2, {0.8, 0.2, 1.0, 0, 0, 0, 0, 0, 0, 1.0, 0, 0, 1.0, 0});
  row(3, {1.0, 0.0, 0.0, 1.0, 0, 0, 0, 0, 0, 0.5, 0.0, 0.5, 1.0, 0.0});
  row(4, {1.0, 0.0, 0.0, 0.0, 1.0, 0, 0, 0, 0, 0.0, 1.0, 0.0, 1.0, 0.0});
  row(5, {1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0, 0, 0, 1.0, 0.0, 0.0, 0.0, 1.0});
  row(6, {0, 0, 0, 0, 0, 0, 1.0, 0, 0, 0, 0, 0, 0, 0});
  row(7, {0, 0, 0, 0, 0, 0, 0, 1.0, 0, 0, 0, 0, 0, 0});
  row(8, {0, 0, 0, 0, 0, 0, 0, 0, 1.0, 0, 0, 0, 0, 0});
  row(9, {10.0 / 12, 2.0 / 12, 10.0 / 12, 1.0 / 12, 0.0, 1.0 / 12, 0, 0, 0, 1.0, 0.0, 0.0,
          11.0 / 12, 1.0 / 12});
  row(10, {1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0, 0, 0, 0.0, 1.0, 0.0, 1.0, 0.0});
  row(11, {1.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0, 0, 0, 0.0, 0.0, 1.0, 1.0, 0.0});
  row(12, {11.0 / 13, 2.0 / 13, 10.0 / 13, 2.0 / 13, 1.0 / 13, 0.0, 0, 0, 0, 11.0 / 13,
           1.0 / 13, 1.0 / 13, 1.0, 0.0});
  row(13, {1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0, 0, 0, 1.0, 0.0, 0.0, 0.0, 1.0});
  return a;
}

inline const char* fixture_corpus_path() {
  return PROTOEM_SOURCE_DIR "/data/fixture/tiny_corpus.jsonl";
}

}  // namespace protoem::testing
