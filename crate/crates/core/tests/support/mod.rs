pub mod loss_oracle;
