#pragma once

// CQI thresholds (dB) and spectral efficiencies (bit/s/Hz) for CQI 1..15, typed in independently of
// the library table.
namespace tiltlab::testing {

inline constexpr double kCqiThreshold[15] = {-6.4, -4.8, -3.4, -2.2, -1.2, -0.1, 0.9, 2.1,
                                             3.3,  4.8,  6.5,  8.5,  10.9, 13.8, 17.1};
inline constexpr double kCqiEfficiency[15] = {0.1524, 0.377,  0.877,  1.4764, 1.914,  2.4064, 2.7306, 3.3222,
                                              3.9024, 4.5234, 5.115,  5.5544, 6.2264, 6.9072, 7.4064};

inline int reference_cqi(double sinr_db) {
  int cqi = 0;
  for (int i = 0; i < 15; ++i)
    if (kCqiThreshold[i] <= sinr_db) cqi = i + 1;
  return cqi;
}

inline double reference_efficiency(double sinr_db) {
  const int cqi = reference_cqi(sinr_db);
  return cqi == 0 ? 0.0 : kCqiEfficiency[cqi - 1];
}

}  // namespace tiltlab::testing
