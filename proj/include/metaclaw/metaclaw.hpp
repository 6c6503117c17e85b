#pragma once

#include "metaclaw/buffer.hpp"
#include "metaclaw/core/error.hpp"
#include "metaclaw/core/rng.hpp"
#include "metaclaw/core/time.hpp"
#include "metaclaw/evolution.hpp"
#include "metaclaw/http.hpp"
#include "metaclaw/policy.hpp"
#include "metaclaw/rules.hpp"
#include "metaclaw/runtime.hpp"
#include "metaclaw/scheduler.hpp"
#include "metaclaw/simbench.hpp"
#include "metaclaw/skill_store.hpp"
#include "metaclaw/trainer.hpp"
#include "metaclaw/trajectory.hpp"
