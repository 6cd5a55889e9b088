/*
 * Copyright 2026 The implang Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *    http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <stdexcept>
#include <string>

namespace implang {

// Error categories map onto CLI exit codes.
enum class ErrorCategory { Input = 2, Config = 3, Runtime = 4 };

class Error : public std::runtime_error
{
public:
  Error(ErrorCategory category, const std::string& what)
  : std::runtime_error(what), _category(category) {}

  ErrorCategory category() const { return _category; }

private:
  ErrorCategory _category;
};

class InputError : public Error
{
public:
  explicit InputError(const std::string& what)
  : Error(ErrorCategory::Input, what) {}
};

class ConfigError : public Error
{
public:
  explicit ConfigError(const std::string& what)
  : Error(ErrorCategory::Config, what) {}
};

class RuntimeError : public Error
{
public:
  explicit RuntimeError(const std::string& what)
  : Error(ErrorCategory::Runtime, what) {}
};

} // namespace implang
