#pragma once

#include <string>

#include "firstdrive/civil_time.hpp"
#include "firstdrive/data_model.hpp"

namespace testutil {

inline firstdrive::TripSession trip(const std::string& start, const std::string& end, double km = 10.0,
                                    const std::string& id = "V") {
  firstdrive::TripSession t;
  t.vehicle_id = id;
  t.start = firstdrive::parse_timestamp(start);
  t.end = firstdrive::parse_timestamp(end);
  t.distance_km = km;
  return t;
}

inline firstdrive::ChargeSession charge(const std::string& start, const std::string& end, double soc,
                                        const std::string& id = "V") {
  firstdrive::ChargeSession c;
  c.vehicle_id = id;
  c.start = firstdrive::parse_timestamp(start);
  c.end = firstdrive::parse_timestamp(end);
  c.soc_initial = soc;
  return c;
}

}  // namespace testutil
