#pragma once

#include "confine/error.hpp"
#include "confine/timestamp.hpp"
#include "confine/eventlog.hpp"
#include "confine/log_io.hpp"
#include "confine/merge.hpp"
#include "confine/hminer.hpp"
#include "confine/crypto.hpp"
#include "confine/attest.hpp"
#include "confine/wire.hpp"
#include "confine/provisioner.hpp"
#include "confine/miner.hpp"
#include "confine/http.hpp"
#include "confine/regression.hpp"
#include "confine/harness.hpp"
