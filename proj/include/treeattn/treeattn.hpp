#pragma once

#include "treeattn/common.hpp"
#include "treeattn/tree.hpp"
#include "treeattn/kv_cache.hpp"
#include "treeattn/partition.hpp"
#include "treeattn/attention.hpp"
#include "treeattn/io_model.hpp"
#include "treeattn/workloads.hpp"
#include "treeattn/presets.hpp"
#include "treeattn/serde.hpp"
#include "treeattn/synth.hpp"
