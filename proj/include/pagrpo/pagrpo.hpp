#pragma once

#include "pagrpo/answer.hpp"
#include "pagrpo/checkpoint.hpp"
#include "pagrpo/config.hpp"
#include "pagrpo/format_rewards.hpp"
#include "pagrpo/gradcheck.hpp"
#include "pagrpo/grpo_math.hpp"
#include "pagrpo/policy.hpp"
#include "pagrpo/rewards.hpp"
#include "pagrpo/rng.hpp"
#include "pagrpo/run.hpp"
#include "pagrpo/task.hpp"
#include "pagrpo/templates.hpp"
#include "pagrpo/trainer.hpp"
#include "pagrpo/vocab.hpp"
